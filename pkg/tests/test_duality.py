"""Virtual-uplink engine: covariances, fixed point, receivers, scalings."""

import numpy as np
import pytest

from dpsbeam import config, duality, scenario, sum_power
from dpsbeam.errors import DegenerateAssociationError, InfeasibleScalingError

from helpers import (explicit_instance, shared_station_pair, single_link,
                     single_mobile_two_stations)


def _seeded_instance(num_ms=3, antennas=2, gamma_db=6.0, seed=7,
                     layout=None):
    cfg = config.ScenarioConfig(
        bs_positions=scenario.layout_two_cell() if layout is None else layout,
        num_ms=num_ms, antennas=antennas, gamma_db=gamma_db)
    return config.build_instance(cfg, seed=seed)


# ---------------------------------------------------------------- covariance

def test_covariance_identity_without_uplink_power():
    inst = _seeded_instance(antennas=3)
    cov = duality.uplink_covariance(inst, np.zeros(3), np.ones(2), 0)
    assert np.allclose(cov, np.eye(3))


def test_covariance_scalar_closed_form():
    inst = single_link(gamma=1.0)
    cov = duality.uplink_covariance(inst, np.array([1.0]), np.array([1.0]), 0)
    assert cov.shape == (1, 1)
    assert cov[0, 0] == pytest.approx(2.0)


def test_covariance_matches_naive_accumulation():
    inst = _seeded_instance(num_ms=4, antennas=3, seed=21)
    rng = np.random.default_rng(0)
    lam = rng.uniform(0.1, 2.0, size=4)
    w = rng.uniform(0.5, 1.5, size=2)
    for q in range(2):
        naive = w[q] * np.eye(3, dtype=complex)
        for j in range(4):
            h = inst.channels.gains[j, q]
            naive += lam[j] * np.outer(h, h.conj())
        cov = duality.uplink_covariance(inst, lam, w, q)
        assert np.allclose(cov, naive, atol=1e-12)
        assert np.allclose(cov, cov.conj().T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(cov)) >= w[q] - 1e-12


# ------------------------------------------------------- required power f_iq

def test_required_power_scalar_closed_forms():
    inst = single_link(gamma=1.0)
    # f = (gamma/(1+gamma)) * (lam |h|^2 + w) / |h|^2 at M=1
    f0 = duality.required_uplink_power(inst, np.zeros(1), np.ones(1), 0, 0)
    f1 = duality.required_uplink_power(inst, np.ones(1), np.ones(1), 0, 0)
    assert f0 == pytest.approx(0.5)
    assert f1 == pytest.approx(1.0)  # the fixed point


def test_required_power_matches_cofactor_inverse():
    inst = _seeded_instance(num_ms=2, antennas=2, seed=13)
    lam = np.array([0.7, 0.3])
    w = np.ones(2)
    for i in range(2):
        for q in range(2):
            cov = duality.uplink_covariance(inst, lam, w, q)
            a, b = cov[0, 0], cov[0, 1]
            c, d = cov[1, 0], cov[1, 1]
            det = a * d - b * c
            inv = np.array([[d, -b], [-c, a]]) / det
            h = inst.channels.gains[i, q]
            quad = float(np.real(h.conj() @ inv @ h))
            g = inst.gamma[i]
            want = (g / (1 + g)) / quad
            got = duality.required_uplink_power(inst, lam, w, i, q)
            assert got == pytest.approx(want, rel=1e-12)
            assert got > 0


# ------------------------------------------------------------ fixed point

def test_fixed_point_single_link():
    out = duality.fixed_point_solve(single_link(gamma=1.0))
    assert out.status == duality.CONVERGED
    assert out.state.uplink_powers[0] == pytest.approx(1.0, abs=1e-8)
    assert out.dual_value == pytest.approx(0.01, abs=1e-10)


def test_fixed_point_symmetric_pair_below_wall():
    out = duality.fixed_point_solve(shared_station_pair(gamma=0.5))
    assert out.status == duality.CONVERGED
    assert np.allclose(out.state.uplink_powers, 1.0, atol=1e-8)
    assert out.dual_value == pytest.approx(0.02, abs=1e-10)


def test_fixed_point_detects_infeasible_pair_at_wall():
    out = duality.fixed_point_solve(shared_station_pair(gamma=1.0))
    assert out.status == duality.INFEASIBLE
    assert out.witness  # divergence evidence is recorded


def test_fixed_point_iteration_limit_status():
    out = duality.fixed_point_solve(shared_station_pair(gamma=0.999),
                                    max_iter=3)
    assert out.status == duality.ITERATION_LIMIT


def test_fixed_point_equality_only_at_serving_station():
    inst = _seeded_instance(num_ms=3, antennas=2, seed=10)
    out = duality.fixed_point_solve(inst, tolerance=1e-11)
    assert out.converged
    lam = out.state.uplink_powers
    w = out.state.bs_weights
    for i, cand in enumerate(inst.clustering.candidate_sets):
        values = [duality.required_uplink_power(inst, lam, w, i, q)
                  for q in cand]
        best = int(np.argmin(values))
        assert values[best] == pytest.approx(lam[i], rel=1e-8)
        for k, v in enumerate(values):
            assert v >= lam[i] * (1 - 1e-8)


def test_fixed_point_unique_across_initializations():
    inst = _seeded_instance(num_ms=4, antennas=4, seed=3)
    tol = 1e-10
    lo = duality.fixed_point_solve(inst, tolerance=tol)
    hi = duality.fixed_point_solve(
        inst, tolerance=tol,
        initial=np.full(4, 10.0 / inst.noise_power))
    assert lo.converged and hi.converged
    scale = np.max(np.abs(lo.state.uplink_powers))
    diff = np.max(np.abs(lo.state.uplink_powers - hi.state.uplink_powers))
    assert diff <= 100 * tol * (1 + scale)


def test_fixed_point_residue_trace_contracts():
    inst = _seeded_instance(num_ms=4, antennas=4, gamma_db=8.0, seed=2)
    out = duality.fixed_point_solve(inst)
    assert out.converged
    tail = np.asarray(out.state.residue_trace)[-25:]
    assert np.all(tail[1:] <= tail[:-1] * (1 + 1e-9))


def test_standard_function_properties_sampled():
    inst = _seeded_instance(num_ms=4, antennas=2, gamma_db=8.0, seed=5)
    rng = np.random.default_rng(99)
    w = np.ones(2)
    for _ in range(300):
        lam = rng.gamma(1.0, 2.0, size=4)
        bump = lam + rng.uniform(0.0, 1.0, size=4)
        c = rng.uniform(1.0 + 1e-6, 4.0)
        t = duality.required_power_map(inst, lam, w)
        t_up = duality.required_power_map(inst, bump, w)
        t_sc = duality.required_power_map(inst, c * lam, w)
        assert np.all(t > 0)
        assert np.all(t_up >= t - 1e-15)
        assert np.all(t_sc < c * t)


def test_scalarization_certificate_at_fixed_point():
    inst = _seeded_instance(num_ms=3, antennas=2, gamma_db=6.0, seed=10)
    out = duality.fixed_point_solve(inst, tolerance=1e-11)
    assert out.converged
    lam = out.state.uplink_powers
    w = out.state.bs_weights
    gains = inst.channels.gains
    for i, cand in enumerate(inst.clustering.candidate_sets):
        f = [duality.required_uplink_power(inst, lam, w, i, q) for q in cand]
        serving = cand[int(np.argmin(f))]
        for q in cand:
            mat = w[q] * np.eye(inst.antennas, dtype=complex)
            for j in range(inst.num_ms):
                if j != i:
                    h = gains[j, q]
                    mat += lam[j] * np.outer(h, h.conj())
            h = gains[i, q]
            mat -= (lam[i] / inst.gamma[i]) * np.outer(h, h.conj())
            smallest = float(np.min(np.linalg.eigvalsh(mat)))
            assert smallest >= -1e-8 * w[q]
            if q == serving:
                assert abs(smallest) <= 1e-6 * w[q]


# ------------------------------------------------------------- receivers

def test_receivers_unit_norm_and_matched_filter_limit():
    inst = _seeded_instance(num_ms=2, antennas=3, seed=4)
    state = duality.DualState(uplink_powers=np.zeros(2),
                              bs_weights=np.ones(2), iterations=0,
                              residue_trace=np.zeros(1), sup_trace=np.zeros(1))
    recv = duality.mmse_receivers(inst, state)
    for i in range(2):
        for q in range(2):
            d = recv.directions[i, q]
            assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-12)
            h = inst.channels.gains[i, q]
            align = abs(np.vdot(h, d)) / np.linalg.norm(h)
            assert align == pytest.approx(1.0, abs=1e-12)


def test_receivers_suppress_interference_versus_matched_filter():
    inst = _seeded_instance(num_ms=2, antennas=3, gamma_db=10.0, seed=6)
    out = duality.fixed_point_solve(inst)
    assert out.converged
    recv = duality.mmse_receivers(inst, out.state)
    h0 = inst.channels.gains[0, 0]
    h1 = inst.channels.gains[1, 0]
    matched = h0 / np.linalg.norm(h0)
    cross_mmse = abs(np.vdot(h1, recv.directions[0, 0]))
    cross_matched = abs(np.vdot(h1, matched))
    assert cross_mmse < cross_matched


def test_select_association_reports_ties():
    inst = single_mobile_two_stations(1.0, 1.0)
    out = duality.fixed_point_solve(inst)
    assoc, ties = duality.select_association(inst, out.state)
    assert assoc == (0,)
    assert ties[0] == (0, 1)
    lopsided = single_mobile_two_stations(2.0, 1.0, gamma=1.0)
    out2 = duality.fixed_point_solve(lopsided)
    assoc2, ties2 = duality.select_association(lopsided, out2.state)
    assert assoc2 == (0,) and ties2[0] == (0,)


# ------------------------------------------------------- power scalings

def test_coupling_matrix_single_mobile_definition():
    inst = single_link(gamma=2.0)
    out = duality.fixed_point_solve(inst)
    recv = duality.mmse_receivers(inst, out.state)
    G = duality.power_coupling_matrix(inst, (0,), recv)
    h = inst.channels.gains[0, 0]
    want = abs(np.vdot(h, recv.directions[0, 0])) ** 2 / 2.0
    assert G.shape == (1, 1)
    assert G[0, 0] == pytest.approx(want, rel=1e-12)


def test_coupling_matrix_matches_naive_loop_and_sign_structure():
    inst = _seeded_instance(num_ms=3, antennas=2, seed=11)
    out = duality.fixed_point_solve(inst)
    assert out.converged
    recv = duality.mmse_receivers(inst, out.state)
    assoc, _ = duality.select_association(inst, out.state)
    G = duality.power_coupling_matrix(inst, assoc, recv)
    for i in range(3):
        for j in range(3):
            gain = abs(np.vdot(inst.channels.gains[i, assoc[j]],
                               recv.directions[j, assoc[j]])) ** 2
            want = gain / inst.gamma[i] if i == j else -gain
            assert G[i, j] == pytest.approx(want, rel=1e-12, abs=1e-300)
    assert np.all(np.diag(G) > 0)
    off = G - np.diag(np.diag(G))
    assert np.all(off <= 0)
    # M-matrix characterization: the inverse is entrywise nonnegative
    assert np.all(np.linalg.inv(G) >= -1e-12)


def test_coupling_matrix_rejects_dead_serving_link():
    gains = np.zeros((1, 2, 1), dtype=complex)
    gains[0, 1, 0] = 1.0
    inst = explicit_instance(gains, gamma=1.0)
    recv = duality.ReceiverSet(directions=np.zeros((1, 2, 1), dtype=complex))
    with pytest.raises(DegenerateAssociationError):
        duality.power_coupling_matrix(inst, (0,), recv)


def test_downlink_scaling_scalar_and_diagonal():
    d = duality.solve_downlink_scaling(np.array([[4.0]]), 0.01)
    assert d[0] == pytest.approx(0.0025)
    diag = duality.solve_downlink_scaling(np.diag([2.0, 5.0]), 0.01)
    assert np.allclose(diag, [0.005, 0.002])


def test_downlink_scaling_enforces_targets_exactly():
    inst = _seeded_instance(num_ms=4, antennas=4, gamma_db=6.0, seed=14)
    sol = sum_power.solve_dps_sum_power(inst)
    assert sol.feasible
    grid = sum_power.full_beam_grid(inst, sol)
    sinr = duality.downlink_sinr(inst, grid)
    assert np.max(np.abs(sinr / inst.gamma - 1.0)) <= 1e-8


def test_downlink_scaling_rejects_unsupportable_association():
    inst = shared_station_pair(gamma=1.0)
    recv = duality.ReceiverSet(
        directions=np.ones((2, 1, 1), dtype=complex))
    G = duality.power_coupling_matrix(inst, (0, 0), recv)
    with pytest.raises(InfeasibleScalingError):
        duality.solve_downlink_scaling(G, inst.noise_power)


def test_distributed_scaling_single_link_and_symmetric_pair():
    inst = single_link(gamma=1.0)
    out = duality.fixed_point_solve(inst)
    recv = duality.mmse_receivers(inst, out.state)
    d = duality.foschini_miljanic_scaling(inst, (0,), recv)
    assert d[0] == pytest.approx(0.01, rel=1e-9)
    pair = shared_station_pair(gamma=0.5)
    out2 = duality.fixed_point_solve(pair)
    recv2 = duality.mmse_receivers(pair, out2.state)
    d2 = duality.foschini_miljanic_scaling(pair, (0, 0), recv2)
    assert np.allclose(d2, 0.01, rtol=1e-8)


def test_distributed_scaling_matches_direct_solve():
    inst = _seeded_instance(num_ms=4, antennas=4, gamma_db=8.0, seed=15)
    out = duality.fixed_point_solve(inst)
    assert out.converged
    recv = duality.mmse_receivers(inst, out.state)
    assoc, _ = duality.select_association(inst, out.state)
    G = duality.power_coupling_matrix(inst, assoc, recv)
    direct = duality.solve_downlink_scaling(G, inst.noise_power)
    iterative = duality.foschini_miljanic_scaling(inst, assoc, recv)
    assert np.max(np.abs(direct - iterative)) <= 1e-7


def test_distributed_scaling_diverges_on_infeasible_targets():
    inst = shared_station_pair(gamma=1.5)
    recv = duality.ReceiverSet(directions=np.ones((2, 1, 1), dtype=complex))
    with pytest.raises(InfeasibleScalingError):
        duality.foschini_miljanic_scaling(inst, (0, 0), recv, max_iter=5000)


# --------------------------------------------------------------- SINR / CSV

def test_downlink_sinr_closed_forms():
    inst = single_link(gamma=1.0, antennas=2)
    h = inst.channels.gains[0, 0]
    p = 0.04
    grid = np.zeros((1, 1, 2), dtype=complex)
    grid[0, 0] = np.sqrt(p) * h / np.linalg.norm(h)
    sinr = duality.downlink_sinr(inst, grid)
    want = p * np.linalg.norm(h) ** 2 / inst.noise_power
    assert sinr[0] == pytest.approx(want, rel=1e-12)
    assert duality.downlink_sinr(inst, np.zeros((1, 1, 2)))[0] == 0.0


def test_residue_trace_csv_shape():
    out = duality.fixed_point_solve(single_link(gamma=1.0))
    text = duality.residue_trace_csv(out)
    lines = text.strip().splitlines()
    assert lines[0] == "iteration,uplink_power_sup,residue"
    assert len(lines) == 1 + out.state.iterations
    first = lines[1].split(",")
    assert first[0] == "1" and float(first[1]) > 0

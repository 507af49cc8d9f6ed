"""Brute-force references and the loop-based solution verifier."""

import dataclasses

import numpy as np
import pytest

from dpsbeam import errors, margin, oracle, scenario, sum_power
from dpsbeam.config import ScenarioConfig, build_instance

from helpers import (shared_station_pair, single_link,
                     single_mobile_two_stations, triangle_layout)


def _seeded_instance(num_ms, antennas, gamma_db, seed, layout=None):
    cfg = ScenarioConfig(
        bs_positions=scenario.layout_two_cell() if layout is None else layout,
        num_ms=num_ms, antennas=antennas, gamma_db=gamma_db)
    return build_instance(cfg, seed=seed)


# ------------------------------------------------------------- enumeration

def test_enumeration_counts_and_order():
    two = scenario.Clustering(2, ((0, 1), (0, 1)))
    profiles = list(oracle.enumerate_associations(two))
    assert len(profiles) == 4
    assert profiles == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert profiles == sorted(profiles)

    three = scenario.Clustering(3, ((0, 1, 2),) * 3)
    assert len(list(oracle.enumerate_associations(three))) == 27

    pinned = scenario.Clustering(2, ((1,), (0,)))
    assert list(oracle.enumerate_associations(pinned)) == [(1, 0)]


def test_enumeration_guard_refuses_exponential_blowup():
    big = scenario.Clustering(2, ((0, 1),) * 21)  # 2^21 > 10^6
    with pytest.raises(errors.EnumerationGuardError):
        oracle.enumerate_associations(big)


# --------------------------------------------------------- sum-power oracle

def test_brute_force_sum_power_closed_form():
    inst = single_mobile_two_stations(2.0, 1.0)
    profile, objective = oracle.brute_force_sum_power(inst)
    assert profile == (0,)
    assert objective == pytest.approx(0.0025, rel=1e-9)


def test_brute_force_sum_power_infeasible_instance():
    profile, objective = oracle.brute_force_sum_power(
        shared_station_pair(gamma=1.0))
    assert profile is None and objective is None


def test_brute_force_never_undercut_by_any_profile():
    inst = _seeded_instance(num_ms=3, antennas=2, gamma_db=6.0, seed=2)
    profile, objective = oracle.brute_force_sum_power(inst)
    assert profile is not None
    for other in oracle.enumerate_associations(inst.clustering):
        fixed = sum_power.solve_cscb_fixed(inst, other)
        if fixed.status == sum_power.OPTIMAL:
            assert objective <= fixed.objective * (1 + 1e-9)


# ------------------------------------------------------------ margin oracle

def test_brute_force_margin_closed_forms():
    profile, alpha = oracle.brute_force_margin(single_mobile_two_stations(1.0, 1.0))
    assert profile == (0,)
    assert alpha == pytest.approx(0.01, abs=2e-8)

    profile, alpha = oracle.brute_force_margin(single_mobile_two_stations(2.0, 1.0))
    assert profile == (0,)
    assert alpha == pytest.approx(0.0025, abs=2e-8)

    profile, alpha = oracle.brute_force_margin(single_link(gamma=1.0))
    assert profile == (0,)
    assert alpha == pytest.approx(0.01, abs=2e-8)


def test_brute_force_margin_infeasible_instance():
    profile, alpha = oracle.brute_force_margin(shared_station_pair(gamma=1.0))
    assert profile is None and alpha is None


def test_brute_force_margin_beats_every_fixed_profile():
    inst = _seeded_instance(num_ms=2, antennas=2, gamma_db=6.0,
                            seed=7, layout=triangle_layout())
    profile, alpha = oracle.brute_force_margin(inst)
    assert profile is not None
    for other in oracle.enumerate_associations(inst.clustering):
        fixed = margin.solve_margin_fixed(inst, other)
        if fixed.alpha is not None:
            assert alpha <= fixed.alpha + 2e-8


# --------------------------------------------------------------- verifier

def test_verifier_passes_optimal_sum_power_design():
    inst = _seeded_instance(num_ms=3, antennas=2, gamma_db=6.0, seed=0)
    sol = sum_power.solve_dps_sum_power(inst)
    assert sol.status == sum_power.OPTIMAL
    report = oracle.verify_solution(inst, sol)
    assert report.passed, report.render()
    names = [c.name for c in report.checks]
    assert "one_station_per_mobile" in names
    assert "sinr_targets_met_with_equality" in names
    assert "per_station_power_accounting" in names
    assert "objective_accounting" in names
    assert "duality_gap" in names


def test_verifier_passes_margin_design():
    inst = _seeded_instance(num_ms=3, antennas=2, gamma_db=6.0, seed=0)
    sol = margin.solve_dps_margin(inst)
    assert sol.feasible
    report = oracle.verify_solution(inst, sol)
    assert report.passed, report.render()
    names = [c.name for c in report.checks]
    assert "achieved_margin" in names
    assert "margin_sandwich" in names


def test_verifier_catches_scaled_down_beams():
    inst = _seeded_instance(num_ms=3, antennas=2, gamma_db=6.0, seed=0)
    sol = sum_power.solve_dps_sum_power(inst)
    broken = dataclasses.replace(sol, beamformers=0.99 * sol.beamformers)
    report = oracle.verify_solution(inst, broken)
    assert not report.passed
    failed = {c.name for c in report.checks if not c.passed}
    assert "sinr_targets_met_with_equality" in failed


def test_verifier_catches_wrong_objective():
    inst = _seeded_instance(num_ms=3, antennas=2, gamma_db=6.0, seed=0)
    sol = sum_power.solve_dps_sum_power(inst)
    broken = dataclasses.replace(sol, objective=1.5 * sol.objective)
    report = oracle.verify_solution(inst, broken)
    failed = {c.name for c in report.checks if not c.passed}
    assert "objective_accounting" in failed


def test_verifier_catches_out_of_cluster_station():
    gains = np.zeros((1, 2, 1), dtype=complex)
    gains[0, 0, 0] = 1.0
    gains[0, 1, 0] = 1.0
    inst = single_mobile_two_stations(1.0, 1.0)
    pinned = inst.with_clustering(scenario.Clustering(2, ((0,),)))
    sol = sum_power.solve_dps_sum_power(inst)
    moved = dataclasses.replace(sol, association=(1,))
    report = oracle.verify_solution(pinned, moved)
    failed = {c.name for c in report.checks if not c.passed}
    assert "one_station_per_mobile" in failed


def test_verifier_requires_a_design():
    inst = single_link(gamma=1.0)
    report = oracle.verify_solution(inst, object())
    assert not report.passed
    assert report.checks[0].name == "design_present"


def test_naive_sinrs_match_vectorized_evaluation():
    inst = _seeded_instance(num_ms=3, antennas=2, gamma_db=6.0, seed=3)
    sol = sum_power.solve_dps_sum_power(inst)
    assert sol.status == sum_power.OPTIMAL
    from dpsbeam import duality
    grid = sum_power.full_beam_grid(inst, sol)
    fast = duality.downlink_sinr(inst, grid)
    slow = oracle._naive_sinrs(inst, sol.association, sol.beamformers)
    assert np.allclose(fast, slow, rtol=1e-10)


def test_report_render_format():
    report = oracle.VerificationReport(checks=(
        oracle.CheckResult("duality_gap", True, 1e-9, 1e-6),
        oracle.CheckResult("achieved_margin", False, 0.5, 1e-8),
    ))
    text = report.render()
    assert "duality_gap: PASS" in text
    assert "achieved_margin: FAIL" in text
    assert not report.passed

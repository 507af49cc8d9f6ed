"""Transmit-power margin minimization under per-station budgets.

The margin problem scales every station's power budget by a common factor
alpha and asks for the smallest alpha that still meets all SINR targets.
Its dual adds per-station noise weights constrained by a budget-weighted
simplex; for any fixed weights the inner problem is the weighted sum-power
dual, so the outer problem maximizes a concave function of the weights.

The outer maximization is a cutting-plane scheme.  Every inner solve
recovers a feasible design whose per-station powers p satisfy
sum(mu * p) = phi(mu) exactly and sum(nu * p) >= phi(nu) for every other
weight vector nu, so each evaluation contributes the exact supporting
hyperplane z <= nu . p.  A small linear program over the accumulated cuts
bounds the dual optimum from above; the best evaluation bounds it from
below, and the gap between the two is a convergence certificate that keeps
working at kinks of the dual (where several stations tie for a mobile and
naive ascent directions oscillate).  A few utilization-balancing steps seed
the cut model near the central region before the linear program takes over.
Every iterate provides a valid lower bound alpha_lower; the solver reports
it together with a constructive upper bound from the strongest tied
station, bracketing the true margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import duality
from .errors import ConfigError, DegenerateAssociationError, InfeasibleScalingError
from .scenario import ProblemInstance

OPTIMAL = "optimal"
BOUNDED = "bounded"
INFEASIBLE = "infeasible"
INDETERMINATE = "indeterminate"

CERTIFIED = "certified"
PLATEAU = "plateau"
OUTER_LIMIT = "outer_iteration_limit"
DUAL_ABOVE = "dual_above_budget"
MARGIN_MET = "margin_within_budget"

DEFAULT_OUTER_TOLERANCE = 1e-7
DEFAULT_OUTER_MAX_ITER = 400
DEFAULT_INNER_TOLERANCE = 1e-10
SEED_STEPS = 8
WEIGHT_FLOOR = 1e-8


@dataclass(frozen=True)
class MarginSolution:
    """Margin bracket and design for one instance.

    alpha_lower is a certified dual lower bound on the optimal margin of the
    station-selection problem; alpha_upper is the margin achieved by the
    returned design.  tight means the two provably coincide to tolerance, in
    which case the design is optimal.  bs_weights and uplink_powers carry
    the relaxed dual optimizers behind alpha_lower.
    """

    status: str
    alpha_lower: float = None
    alpha_upper: float = None
    association: tuple = None
    beamformers: np.ndarray = None
    per_bs_power: np.ndarray = None
    bs_weights: np.ndarray = None
    uplink_powers: np.ndarray = None
    tight: bool = False
    outer_iterations: int = 0
    witness: dict = field(default=None, compare=False)

    @property
    def feasible(self) -> bool:
        return self.status in (OPTIMAL, BOUNDED)


@dataclass(frozen=True)
class MarginDual:
    """Outcome of the outer dual maximization.

    residual bounds the relative dual suboptimality: the true relaxed
    optimum is at most dual_value * (1 + residual).  Status "certified"
    means residual closed below the outer tolerance.
    """

    status: str                 # "certified", "plateau", ...
    alpha_lower: float = None
    dual_value: float = None
    state: duality.DualState = None
    association: tuple = None
    tie_sets: tuple = None
    scaling: np.ndarray = None
    per_bs_power: np.ndarray = None
    residual: float = None
    outer_iterations: int = 0
    witness: dict = field(default=None, compare=False)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED


class _Evaluation:
    """Inner solve plus primal recovery at one weight vector."""

    __slots__ = ("outcome", "phi", "association", "tie_sets", "scaling",
                 "per_bs_power", "recovered", "alpha_hat", "u_max")

    def __init__(self, instance, mu_full, budget, caps, inner_tolerance,
                 lam_warm, dual_stop_above):
        self.outcome = duality.fixed_point_solve(
            instance, weights=mu_full, tolerance=inner_tolerance,
            initial=lam_warm, dual_value_cap=dual_stop_above)
        self.recovered = False
        self.phi = None
        if not self.outcome.converged:
            return
        self.phi = self.outcome.dual_value
        self.alpha_hat = self.phi / budget
        self.association, self.tie_sets = duality.select_association(
            instance, self.outcome.state)
        try:
            receivers = duality.mmse_receivers(instance, self.outcome.state)
            G = duality.power_coupling_matrix(instance, self.association,
                                              receivers)
            self.scaling = duality.solve_downlink_scaling(
                G, instance.noise_power)
            per_bs = np.zeros(instance.num_bs)
            for i, q in enumerate(self.association):
                per_bs[q] += self.scaling[i]
            self.per_bs_power = per_bs
            self.u_max = float(np.max(per_bs / caps))
            self.recovered = True
        except (InfeasibleScalingError, DegenerateAssociationError):
            self.scaling = None
            self.per_bs_power = None
            self.u_max = np.inf


class _Snapshot:
    __slots__ = ("phi", "mu", "state", "association", "tie_sets",
                 "scaling", "per_bs_power")

    def __init__(self):
        self.phi = -np.inf
        self.mu = None

    def take(self, mu_full, ev: _Evaluation):
        self.phi = ev.phi
        self.mu = mu_full
        self.state = ev.outcome.state
        self.association = ev.association
        self.tie_sets = ev.tie_sets
        self.scaling = ev.scaling
        self.per_bs_power = ev.per_bs_power


def _maximize_weighted_dual(instance: ProblemInstance, caps,
                            outer_tolerance=DEFAULT_OUTER_TOLERANCE,
                            outer_max_iter=DEFAULT_OUTER_MAX_ITER,
                            inner_tolerance=DEFAULT_INNER_TOLERANCE,
                            dual_stop_above=None,
                            margin_stop_at=None) -> MarginDual:
    """Maximize the weighted dual value over the budget-constrained weights.

    caps are the per-station budgets entering both the weight constraint
    sum(mu * caps) <= sum(caps) and the utilizations power/caps.  Optional
    early exits: dual_stop_above aborts as soon as the dual value provably
    exceeds it (the feasibility "no" certificate), margin_stop_at aborts as
    soon as a recovered design has max utilization at or below it (the
    "yes" certificate).
    """
    caps = np.asarray(caps, dtype=float)
    Q = instance.num_bs
    if caps.shape != (Q,) or not np.all(caps > 0):
        raise ConfigError("caps must be positive, one per station")
    mask = instance.clustering.mask()
    active = np.flatnonzero(mask.any(axis=0))
    caps_act = caps[active]
    budget = float(caps.sum())
    surface = budget / float(caps_act.sum())
    floor = WEIGHT_FLOOR * surface
    mu_act = np.full(active.size, surface)

    best = _Snapshot()
    lam_warm = None
    fail_streak = 0
    status = OUTER_LIMIT
    witness = None
    outer = 0
    cuts = []
    model_upper = np.inf
    inner_eff = inner_tolerance
    last_gap = np.inf
    stall = 0

    def renormalized(vec):
        vec = np.maximum(vec, floor)
        return vec * (budget / float(vec @ caps_act))

    def model_argmax():
        # max z  s.t.  z <= nu . p_k for every cut,  nu on the budget
        # surface above the floor.  Variables are [z, nu].
        n = active.size
        a_ub = np.empty((len(cuts), n + 1))
        a_ub[:, 0] = 1.0
        a_ub[:, 1:] = -np.asarray(cuts)
        a_eq = np.concatenate(([0.0], caps_act))[None, :]
        # The certificate compares model values at ~1e-7 relative, so the
        # LP must be solved well below the solver's 1e-7 default tolerance.
        res = linprog(c=-np.eye(n + 1)[0], A_ub=a_ub, b_ub=np.zeros(len(cuts)),
                      A_eq=a_eq, b_eq=[budget],
                      bounds=[(None, None)] + [(floor, None)] * n,
                      method="highs",
                      options={"primal_feasibility_tolerance": 1e-10,
                               "dual_feasibility_tolerance": 1e-10})
        if not res.success:
            return None, None
        return float(res.x[0]), np.asarray(res.x[1:])

    while outer < outer_max_iter:
        outer += 1
        mu_full = np.zeros(Q)
        mu_full[active] = mu_act
        ev = _Evaluation(instance, mu_full, budget, caps, inner_eff,
                         lam_warm, dual_stop_above)
        out = ev.outcome

        if not out.converged:
            if (out.status == duality.INFEASIBLE and out.witness
                    and out.witness.get("reason") == "dual_value_cap"):
                status = DUAL_ABOVE
                witness = out.witness
                break
            if best.mu is None:
                bad = INFEASIBLE if out.status == duality.INFEASIBLE \
                    else INDETERMINATE
                return MarginDual(status=bad, outer_iterations=outer,
                                  witness=out.witness)
            fail_streak += 1
            if fail_streak >= 3:
                status = PLATEAU
                break
            lam_warm = None
            mu_act = renormalized(0.5 * (mu_act + best.mu[active]))
            continue
        lam_warm = out.state.uplink_powers
        if ev.phi > best.phi:
            best.take(mu_full, ev)

        if dual_stop_above is not None and ev.phi > dual_stop_above:
            status = DUAL_ABOVE
            break
        if (margin_stop_at is not None and ev.recovered
                and ev.u_max <= margin_stop_at):
            # Make the qualifying design the reported one.
            best.take(mu_full, ev)
            status = MARGIN_MET
            break

        if not ev.recovered:
            # No design, no cut; retreat toward the best point instead of
            # letting the model re-propose the same weights.
            fail_streak += 1
            if fail_streak >= 3:
                status = PLATEAU
                break
            mu_act = renormalized(0.5 * (mu_act + best.mu[active]))
            continue
        fail_streak = 0
        cuts.append(ev.per_bs_power[active])

        if outer <= SEED_STEPS:
            # Damped utilization balancing walks the central region first
            # so the early cut model is informative where it matters.
            factor = np.clip(ev.per_bs_power[active] / caps_act
                             / ev.alpha_hat, 0.25, 4.0)
            mu_act = renormalized(mu_act * np.sqrt(factor))
            continue

        model_upper, proposal = model_argmax()
        if proposal is None:
            status = PLATEAU
            break
        gap = model_upper - best.phi
        if gap <= outer_tolerance * max(best.phi, 1e-300):
            status = CERTIFIED
            break
        # Cuts carry the inner solve's error (the recovered weighted power
        # sits a hair above the dual value), which can hold the model
        # ceiling open; re-solving tighter as the gap narrows keeps the
        # certificate reachable.  A gap that stops shrinking anyway has hit
        # the numerical floor.
        gap_rel = gap / max(best.phi, 1e-300)
        inner_eff = min(inner_tolerance, max(1e-13, 1e-4 * gap_rel))
        if gap >= 0.95 * last_gap:
            stall += 1
            if stall >= 25:
                status = PLATEAU
                break
        else:
            stall = 0
        last_gap = gap
        mu_act = proposal

    if best.mu is None:
        return MarginDual(status=status, outer_iterations=outer,
                          witness=witness)
    residual = np.inf
    if np.isfinite(model_upper) and best.phi > 0:
        residual = max(0.0, (model_upper - best.phi) / best.phi)
    return MarginDual(status=status, alpha_lower=best.phi / budget,
                      dual_value=best.phi, state=best.state,
                      association=best.association, tie_sets=best.tie_sets,
                      scaling=best.scaling, per_bs_power=best.per_bs_power,
                      residual=residual, outer_iterations=outer,
                      witness=witness)


def solve_margin_dual(instance: ProblemInstance,
                      outer_tolerance=DEFAULT_OUTER_TOLERANCE,
                      outer_max_iter=DEFAULT_OUTER_MAX_ITER,
                      inner_tolerance=DEFAULT_INNER_TOLERANCE) -> MarginDual:
    """Dual lower bound alpha_lower on the optimal margin, with diagnostics.

    The returned alpha_lower is valid for any outcome except "infeasible":
    it is the best dual value found divided by the total budget, and the
    returned weights always satisfy the budget with equality.  Status
    "certified" additionally proves alpha_lower within outer_tolerance
    (relative) of the true relaxed optimum.
    """
    return _maximize_weighted_dual(instance, instance.power_caps,
                                   outer_tolerance=outer_tolerance,
                                   outer_max_iter=outer_max_iter,
                                   inner_tolerance=inner_tolerance)


def extract_association_margin(instance: ProblemInstance,
                               state: duality.DualState,
                               tie_tolerance=duality.TIE_TOLERANCE):
    """Serving stations for the margin design, and whether they are forced.

    Mobiles with a single near-tie candidate keep it.  For ambiguous
    mobiles the strongest tied station wins: the one with the largest
    received amplitude under its own MMSE direction (lowest index on ties).
    Returns (association, forced) with forced true iff no mobile was
    ambiguous.
    """
    _, tie_sets = duality.select_association(instance, state, tie_tolerance)
    receivers = duality.mmse_receivers(instance, state)
    gains = instance.channels.gains
    association = []
    forced = True
    for i, ties in enumerate(tie_sets):
        if len(ties) == 1:
            association.append(ties[0])
            continue
        forced = False
        amplitudes = [
            abs(complex(gains[i, q].conj() @ receivers.directions[i, q]))
            for q in ties
        ]
        association.append(ties[int(np.argmax(amplitudes))])
    return tuple(association), forced


@dataclass(frozen=True)
class FixedMargin:
    """Optimal margin under a fixed association."""

    status: str
    alpha: float = None
    association: tuple = None
    beamformers: np.ndarray = None
    per_bs_power: np.ndarray = None
    bs_weights: np.ndarray = None
    uplink_powers: np.ndarray = None
    residual: float = None
    outer_iterations: int = 0
    witness: dict = field(default=None, compare=False)


def _polish_fixed(restricted, mu_start, lam_warm, inner_tolerance,
                  rounds=60, target=1e-9):
    """Drive a fixed association's utilizations toward perfect balance.

    With the association pinned the dual is smooth, so the multiplicative
    balancing map contracts near the optimum and squeezes the achieved
    margin (max utilization) down to the dual bound far beyond what the
    cut model resolves.  Returns the best evaluation found, or None.
    """
    caps = restricted.power_caps
    budget = float(caps.sum())
    mask = restricted.clustering.mask()
    active = np.flatnonzero(mask.any(axis=0))
    caps_act = caps[active]
    mu_act = np.maximum(mu_start[active], 1e-30)
    mu_act *= budget / float(mu_act @ caps_act)
    best = None
    stalls = 0
    for _ in range(rounds):
        mu_full = np.zeros(restricted.num_bs)
        mu_full[active] = mu_act
        ev = _Evaluation(restricted, mu_full, budget, caps, inner_tolerance,
                         lam_warm, None)
        if not ev.outcome.converged or not ev.recovered:
            break
        lam_warm = ev.outcome.state.uplink_powers
        if best is None or ev.u_max < best[1].u_max:
            best = (mu_full, ev)
            stalls = 0
        else:
            stalls += 1
            if stalls >= 5:
                break
        if (ev.u_max - ev.alpha_hat) <= target * ev.alpha_hat:
            break
        mu_act = mu_act * (ev.per_bs_power[active] / caps_act / ev.alpha_hat)
        mu_act *= budget / float(mu_act @ caps_act)
    return best


def solve_margin_fixed(instance: ProblemInstance, association,
                       outer_tolerance=DEFAULT_OUTER_TOLERANCE,
                       outer_max_iter=DEFAULT_OUTER_MAX_ITER,
                       inner_tolerance=DEFAULT_INNER_TOLERANCE) -> FixedMargin:
    """Margin minimization with the serving stations pinned.

    The returned alpha is the margin actually achieved by the returned
    design (so max_q power_q / cap_q equals alpha exactly); a "certified"
    run additionally proves it optimal to outer_tolerance.  Stations not
    serving anyone get zero weight and zero power.
    """
    restricted = instance.restricted(association)
    result = _maximize_weighted_dual(restricted, restricted.power_caps,
                                     outer_tolerance=outer_tolerance,
                                     outer_max_iter=outer_max_iter,
                                     inner_tolerance=inner_tolerance)
    if result.status in (INFEASIBLE, INDETERMINATE) or result.state is None:
        return FixedMargin(status=result.status,
                           outer_iterations=result.outer_iterations,
                           witness=result.witness)
    state = result.state
    scaling = result.scaling
    per_bs = result.per_bs_power
    polished = _polish_fixed(restricted, state.bs_weights,
                             state.uplink_powers, inner_tolerance)
    if polished is not None:
        old_u = np.inf if per_bs is None \
            else float(np.max(per_bs / instance.power_caps))
        if polished[1].u_max < old_u:
            ev = polished[1]
            state = ev.outcome.state
            scaling = ev.scaling
            per_bs = ev.per_bs_power
    receivers = duality.mmse_receivers(restricted, state)
    if scaling is None:
        try:
            G = duality.power_coupling_matrix(restricted, result.association,
                                              receivers)
            scaling = duality.solve_downlink_scaling(G, restricted.noise_power)
        except (InfeasibleScalingError, DegenerateAssociationError) as exc:
            return FixedMargin(status=INDETERMINATE,
                               outer_iterations=result.outer_iterations,
                               witness={"reason": str(exc)})
        per_bs = np.zeros(instance.num_bs)
        for i, q in enumerate(result.association):
            per_bs[q] += scaling[i]
    beams = np.empty((instance.num_ms, instance.antennas), dtype=complex)
    for i, q in enumerate(result.association):
        beams[i] = np.sqrt(scaling[i]) * receivers.directions[i, q]
    alpha = float(np.max(per_bs / instance.power_caps))
    return FixedMargin(status=result.status, alpha=alpha,
                       association=result.association, beamformers=beams,
                       per_bs_power=per_bs, bs_weights=state.bs_weights,
                       uplink_powers=state.uplink_powers,
                       residual=result.residual,
                       outer_iterations=result.outer_iterations)


def margin_within_budget(instance: ProblemInstance,
                         outer_tolerance=DEFAULT_OUTER_TOLERANCE,
                         outer_max_iter=DEFAULT_OUTER_MAX_ITER,
                         inner_tolerance=DEFAULT_INNER_TOLERANCE) -> bool:
    """Decide whether the instance's SINR targets fit within power_caps.

    Exact decision procedure for "optimal margin <= 1": a recovered design
    whose utilizations stay within budget answers yes; a dual value above
    the total budget answers no by weak duality.  Near-critical instances
    are decided by the certified bracket midpoint.
    """
    result = _maximize_weighted_dual(
        instance, instance.power_caps,
        outer_tolerance=outer_tolerance,
        outer_max_iter=outer_max_iter,
        inner_tolerance=inner_tolerance,
        dual_stop_above=float(np.sum(instance.power_caps)) * (1.0 + 1e-12),
        margin_stop_at=1.0 + 1e-9)
    if result.status == MARGIN_MET:
        return True
    if result.status in (DUAL_ABOVE, INFEASIBLE):
        return False
    if result.status == INDETERMINATE:
        raise InfeasibleScalingError("margin probe could not be decided")
    alpha_low = result.alpha_lower
    if result.certified:
        return alpha_low <= 1.0
    if result.per_bs_power is not None:
        u_max = float(np.max(result.per_bs_power / instance.power_caps))
        return 0.5 * (alpha_low + u_max) <= 1.0
    return alpha_low <= 1.0


def solve_dps_margin(instance: ProblemInstance,
                     outer_tolerance=DEFAULT_OUTER_TOLERANCE,
                     outer_max_iter=DEFAULT_OUTER_MAX_ITER,
                     inner_tolerance=DEFAULT_INNER_TOLERANCE) -> MarginSolution:
    """Bracket (and usually pin) the optimal margin with station selection.

    Runs the relaxed dual maximization for alpha_lower, extracts the
    strongest (near-)tied station per mobile, and prices that fixed
    association exactly for alpha_upper.  When every mobile's station was
    forced and the sandwich collapses (alpha_upper within tolerance of
    alpha_lower) the design is provably optimal and the status says so;
    otherwise the bracket is reported as "bounded".
    """
    dual = solve_margin_dual(instance, outer_tolerance=outer_tolerance,
                             outer_max_iter=outer_max_iter,
                             inner_tolerance=inner_tolerance)
    if dual.status in (INFEASIBLE, INDETERMINATE) or dual.state is None:
        return MarginSolution(status=dual.status,
                              outer_iterations=dual.outer_iterations,
                              witness=dual.witness)
    association, forced = extract_association_margin(instance, dual.state)
    if dual.residual is not None and np.isfinite(dual.residual) \
            and 4.0 * dual.residual > duality.TIE_TOLERANCE:
        # An open dual certificate blurs the tie structure; widen the tie
        # window accordingly before picking the strongest tied stations.
        widened = min(10.0, 4.0 * dual.residual)
        association, _ = extract_association_margin(instance, dual.state,
                                                    tie_tolerance=widened)
    fixed = solve_margin_fixed(instance, association,
                               outer_tolerance=outer_tolerance,
                               outer_max_iter=outer_max_iter,
                               inner_tolerance=inner_tolerance)
    if fixed.status in (INFEASIBLE, INDETERMINATE):
        return MarginSolution(status=BOUNDED, alpha_lower=dual.alpha_lower,
                              association=association,
                              bs_weights=dual.state.bs_weights,
                              uplink_powers=dual.state.uplink_powers,
                              tight=False,
                              outer_iterations=dual.outer_iterations,
                              witness={"reason": "upper_bound_unavailable"})
    # A collapsed sandwich proves the design optimal even when the ascent
    # could not close its own certificate: the true margin lies between the
    # dual bound and the achieved margin.
    tight = forced and (fixed.alpha
                        <= dual.alpha_lower + 1e-6 * (1.0 + dual.alpha_lower))
    return MarginSolution(status=OPTIMAL if tight else BOUNDED,
                          alpha_lower=dual.alpha_lower,
                          alpha_upper=fixed.alpha, association=fixed.association,
                          beamformers=fixed.beamformers,
                          per_bs_power=fixed.per_bs_power,
                          bs_weights=dual.state.bs_weights,
                          uplink_powers=dual.state.uplink_powers,
                          tight=tight,
                          outer_iterations=dual.outer_iterations)


def format_margin(solution: MarginSolution, power_caps=None) -> str:
    """Readable record with both bounds, utilizations and weights."""

    def db(x):
        if x is None or x <= 0:
            return "-inf"
        return f"{10.0 * np.log10(x):.4f}"

    lines = [f"status: {solution.status}", f"tight: {solution.tight}"]
    if solution.alpha_lower is not None:
        lines.append(f"margin lower bound: {solution.alpha_lower:.10g} "
                     f"({db(solution.alpha_lower)} dB)")
    if solution.alpha_upper is not None:
        lines.append(f"margin upper bound: {solution.alpha_upper:.10g} "
                     f"({db(solution.alpha_upper)} dB)")
    if solution.association is not None:
        lines.append(f"association: {[q + 1 for q in solution.association]}")
    if solution.per_bs_power is not None and power_caps is not None:
        util = solution.per_bs_power / np.asarray(power_caps, dtype=float)
        lines.append("per-BS utilization: ["
                     + ", ".join(f"{u:.10g}" for u in util) + "]")
    if solution.bs_weights is not None:
        lines.append("station weights: ["
                     + ", ".join(f"{m:.10g}" for m in solution.bs_weights) + "]")
    lines.append(f"outer iterations: {solution.outer_iterations}")
    return "\n".join(lines) + "\n"

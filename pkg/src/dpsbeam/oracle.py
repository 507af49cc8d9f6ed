"""Brute-force certification: enumeration, bisection and naive verification.

Association search is exponential, so at desk scale it can simply be done:
enumerate every complete association profile, solve each restricted problem
with the fixed-association solvers, and take the minimum.  The margin
reference avoids trusting the outer dual ascent by bisecting each profile's
margin against a per-station budget feasibility probe.  The verifier
recomputes SINRs, powers and the duality gap with plain Python loops that
share no arithmetic with the solver stack, so a shared bug cannot certify
itself.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import margin as margin_mod
from . import sum_power
from .errors import EnumerationGuardError
from .scenario import Clustering, ProblemInstance

ENUMERATION_GUARD = 10 ** 6
BISECTION_TOLERANCE = 1e-8


def enumerate_associations(clustering: Clustering):
    """Yield every complete association profile in lexicographic order.

    Refuses when the profile count exceeds the desk-scale guard.
    """
    total = 1
    for candidates in clustering.candidate_sets:
        total *= len(candidates)
        if total > ENUMERATION_GUARD:
            raise EnumerationGuardError(
                f"profile count exceeds {ENUMERATION_GUARD}")
    return itertools.product(*clustering.candidate_sets)


def brute_force_sum_power(instance: ProblemInstance,
                          tolerance=None):
    """Exhaustive minimum of the weighted sum power over all associations.

    Returns (best_association, best_objective); (None, None) when every
    profile is infeasible, which certifies the instance itself infeasible.
    Ties keep the lexicographically first profile.
    """
    kwargs = {} if tolerance is None else {"tolerance": tolerance}
    best_profile = None
    best_objective = math.inf
    for profile in enumerate_associations(instance.clustering):
        solution = sum_power.solve_cscb_fixed(instance, profile, **kwargs)
        if solution.status != sum_power.OPTIMAL:
            continue
        if solution.objective < best_objective:
            best_objective = solution.objective
            best_profile = profile
    if best_profile is None:
        return None, None
    return best_profile, best_objective


def _margin_probe(instance, profile, alpha):
    """True iff the profile's targets fit within alpha-scaled budgets."""
    scaled = dataclasses.replace(instance.restricted(profile),
                                 power_caps=alpha * instance.power_caps)
    return margin_mod.margin_within_budget(
        scaled, outer_tolerance=1e-5, outer_max_iter=800,
        inner_tolerance=1e-9)


def brute_force_margin(instance: ProblemInstance,
                       tolerance=BISECTION_TOLERANCE):
    """Exhaustive minimum margin over all associations, by bisection.

    Each feasible profile's margin is located by bisecting alpha against a
    per-station budget feasibility probe (caps scaled by alpha), to the
    given absolute tolerance.  The probe bracket comes from the profile's
    own restricted sum-power design: its utilization is a feasible margin,
    and its dual value over the budget-weighted total is a lower bound.
    Returns (best_association, best_alpha), or (None, None) when every
    profile is infeasible.  Ties keep the lexicographically first profile.
    """
    caps = instance.power_caps
    weighted_budget = float(instance.weights @ caps)
    best_profile = None
    best_alpha = math.inf
    for profile in enumerate_associations(instance.clustering):
        solution = sum_power.solve_cscb_fixed(instance, profile)
        if solution.status != sum_power.OPTIMAL:
            continue
        upper = float(np.max(solution.per_bs_power / caps)) * (1 + 1e-9)
        lower = max(solution.dual_value / weighted_budget * (1 - 1e-9), 0.0)
        if lower > best_alpha:
            continue
        hi = upper
        if best_alpha + 2 * tolerance < hi:
            # Cheaper to first ask whether the profile can beat the
            # incumbent at all than to bisect from its own bracket.
            hi = best_alpha + 2 * tolerance
            if not _margin_probe(instance, profile, hi):
                continue
        lo = min(lower, hi)
        while hi - lo > tolerance:
            mid = 0.5 * (lo + hi)
            if _margin_probe(instance, profile, mid):
                hi = mid
            else:
                lo = mid
        if hi < best_alpha:
            best_alpha = hi
            best_profile = profile
    if best_profile is None:
        return None, None
    return best_profile, best_alpha


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float


@dataclass(frozen=True)
class VerificationReport:
    """Pass/fail record of the independent solution checks."""

    checks: tuple

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def render(self) -> str:
        lines = []
        for check in self.checks:
            flag = "PASS" if check.passed else "FAIL"
            lines.append(f"{check.name}: {flag} value={check.value:.6g} "
                         f"tolerance={check.tolerance:.6g}")
        return "\n".join(lines) + "\n"


def _naive_sinrs(instance, association, beams):
    """Per-mobile SINRs recomputed with explicit loops (no linear algebra)."""
    gains = instance.channels.gains
    K, M = len(association), instance.antennas
    received = [[0j] * K for _ in range(K)]  # received[i][j]: beam j at MS i
    for i in range(K):
        for j in range(K):
            q = association[j]
            acc = 0j
            for m in range(M):
                acc += complex(gains[i, q, m]).conjugate() * complex(beams[j][m])
            received[i][j] = acc
    sinrs = []
    for i in range(K):
        signal = abs(received[i][i]) ** 2
        noise = instance.noise_power
        for j in range(K):
            if j != i:
                noise += abs(received[i][j]) ** 2
        sinrs.append(signal / noise)
    return sinrs


def verify_solution(instance: ProblemInstance, solution,
                    sinr_tolerance=1e-8) -> VerificationReport:
    """Independently re-check a solver output against the instance.

    Accepts sum-power and margin solutions alike.  Checks: each mobile is
    served by one candidate station; SINR targets met with equality
    (recomputed with naive loops); per-station power accounting; objective
    and duality gap (sum power) or achieved margin (margin designs).
    """
    checks = []
    beams = getattr(solution, "beamformers", None)
    association = getattr(solution, "association", None)
    if beams is None or association is None:
        return VerificationReport(checks=(
            CheckResult("design_present", False, 0.0, 0.0),))

    allowed = all(
        q in instance.clustering.candidate_sets[i]
        for i, q in enumerate(association))
    checks.append(CheckResult("one_station_per_mobile",
                              allowed and len(association) == instance.num_ms,
                              float(len(association)), 0.0))

    beam_rows = [list(map(complex, beams[i])) for i in range(len(association))]
    sinrs = _naive_sinrs(instance, association, beam_rows)
    worst = 0.0
    for i, sinr in enumerate(sinrs):
        slack = sinr / float(instance.gamma[i]) - 1.0
        worst = max(worst, abs(slack))
    checks.append(CheckResult("sinr_targets_met_with_equality",
                              worst <= sinr_tolerance, worst, sinr_tolerance))

    powers = [0.0] * instance.num_bs
    for i, q in enumerate(association):
        powers[q] += sum(abs(c) ** 2 for c in beam_rows[i])
    reported = getattr(solution, "per_bs_power", None)
    if reported is not None:
        err = max(abs(powers[q] - float(reported[q]))
                  for q in range(instance.num_bs))
        scale = 1.0 + max(powers)
        checks.append(CheckResult("per_station_power_accounting",
                                  err <= 1e-10 * scale, err, 1e-10 * scale))

    objective = getattr(solution, "objective", None)
    if objective is not None:
        recomputed = sum(float(instance.weights[q]) * powers[q]
                         for q in range(instance.num_bs))
        err = abs(recomputed - objective)
        tol = 1e-10 * (1.0 + abs(recomputed))
        checks.append(CheckResult("objective_accounting", err <= tol, err, tol))
        dual = getattr(solution, "dual_value", None)
        if dual is not None:
            gap = abs(objective - dual)
            tol = 1e-6 * (1.0 + abs(objective))
            checks.append(CheckResult("duality_gap", gap <= tol, gap, tol))

    alpha_upper = getattr(solution, "alpha_upper", None)
    if alpha_upper is not None:
        achieved = max(powers[q] / float(instance.power_caps[q])
                       for q in range(instance.num_bs))
        err = abs(achieved - alpha_upper)
        tol = 1e-8 * (1.0 + alpha_upper)
        checks.append(CheckResult("achieved_margin", err <= tol, err, tol))
        alpha_lower = getattr(solution, "alpha_lower", None)
        if alpha_lower is not None:
            slack = alpha_upper - alpha_lower
            checks.append(CheckResult("margin_sandwich", slack >= -1e-6,
                                      slack, 1e-6))
    return VerificationReport(checks=tuple(checks))

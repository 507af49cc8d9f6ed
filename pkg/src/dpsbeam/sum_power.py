"""Joint station selection and beamforming for minimum weighted sum power.

The dual fixed point yields per-mobile uplink powers; the serving station of
every mobile is the candidate that needs the least of it, the beam direction
is the station's MMSE receive filter, and the transmit powers solve a K-by-K
linear system that makes every SINR constraint tight.  The resulting design
is optimal for the relaxed problem and, being one-beam-per-mobile sparse,
optimal for the original combinatorial problem as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import duality
from .errors import ConfigError
from .scenario import ProblemInstance

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class Solution:
    """Result of a sum-power solve.

    beamformers holds one complex M-vector per mobile (the serving beam,
    scaled so its squared norm is the transmit power and phased so the
    serving inner product is real nonnegative).  objective and dual_value
    agree to solver accuracy when status is "optimal".
    """

    status: str
    association: tuple = None
    beamformers: np.ndarray = None
    per_bs_power: np.ndarray = None
    objective: float = None
    dual_value: float = None
    iterations: int = 0
    witness: dict = field(default=None, compare=False)

    @property
    def feasible(self) -> bool:
        return self.status == OPTIMAL


def _assemble(instance, outcome):
    association, _ = duality.select_association(instance, outcome.state)
    receivers = duality.mmse_receivers(instance, outcome.state)
    G = duality.power_coupling_matrix(instance, association, receivers)
    scaling = duality.solve_downlink_scaling(G, instance.noise_power)
    beams = np.empty((instance.num_ms, instance.antennas), dtype=complex)
    per_bs = np.zeros(instance.num_bs)
    for i, q in enumerate(association):
        beams[i] = np.sqrt(scaling[i]) * receivers.directions[i, q]
        per_bs[q] += scaling[i]
    objective = float(instance.weights @ per_bs)
    return association, beams, per_bs, objective


def solve_dps_sum_power(instance: ProblemInstance,
                        tolerance: float = duality.DEFAULT_TOLERANCE,
                        max_iter: int = duality.DEFAULT_MAX_ITER) -> Solution:
    """Optimal dynamic station selection plus beamforming for the instance."""
    outcome = duality.fixed_point_solve(instance, tolerance=tolerance,
                                        max_iter=max_iter)
    iterations = outcome.state.iterations
    if outcome.status == duality.INFEASIBLE:
        return Solution(status=INFEASIBLE, iterations=iterations,
                        witness=outcome.witness)
    if outcome.status != duality.CONVERGED:
        return Solution(status=INDETERMINATE, iterations=iterations,
                        witness=outcome.witness)
    association, beams, per_bs, objective = _assemble(instance, outcome)
    return Solution(status=OPTIMAL, association=association, beamformers=beams,
                    per_bs_power=per_bs, objective=objective,
                    dual_value=outcome.dual_value, iterations=iterations)


def solve_cscb_fixed(instance: ProblemInstance, association,
                     tolerance: float = duality.DEFAULT_TOLERANCE,
                     max_iter: int = duality.DEFAULT_MAX_ITER) -> Solution:
    """Beamforming under a fixed association: same pipeline, singleton sets."""
    return solve_dps_sum_power(instance.restricted(association),
                               tolerance=tolerance, max_iter=max_iter)


def full_beam_grid(instance: ProblemInstance, solution: Solution) -> np.ndarray:
    """(num_ms, num_bs, M) beam grid with zeros off the serving pairs."""
    if solution.association is None:
        raise ConfigError("solution has no design to expand")
    grid = np.zeros((instance.num_ms, instance.num_bs, instance.antennas),
                    dtype=complex)
    for i, q in enumerate(solution.association):
        grid[i, q] = solution.beamformers[i]
    return grid


@dataclass(frozen=True)
class SweepPoint:
    weight_first: float
    weight_second: float
    per_bs_power: np.ndarray
    objective: float
    status: str
    association: tuple = None


def pareto_sweep(instance: ProblemInstance, weight_grid) -> list:
    """Trade-off curve between the two stations' transmit powers.

    Requires a two-station instance.  For every w in the (ascending) grid
    the instance is re-solved with weights (w, 1 - w); each returned point
    carries the two per-station powers, so plotting power_2 against
    power_1 traces the Pareto boundary.
    """
    if instance.num_bs != 2:
        raise ConfigError("weight sweep requires exactly two stations")
    grid = [float(w) for w in weight_grid]
    if any(not 0.0 < w < 1.0 for w in grid):
        raise ConfigError("sweep weights must lie strictly inside (0, 1)")
    if sorted(grid) != grid:
        raise ConfigError("sweep weights must be ascending")
    points = []
    for w1 in grid:
        weighted = ProblemInstance(instance.channels, instance.clustering,
                                   instance.gamma,
                                   np.array([w1, 1.0 - w1]),
                                   instance.power_caps, instance.geometry)
        sol = solve_dps_sum_power(weighted)
        points.append(SweepPoint(
            weight_first=w1, weight_second=1.0 - w1,
            per_bs_power=sol.per_bs_power if sol.feasible else None,
            objective=sol.objective if sol.feasible else None,
            status=sol.status,
            association=sol.association))
    return points


def _dbw(power: float) -> str:
    if power is None:
        return ""
    if power <= 0.0:
        return "-inf"
    return f"{10.0 * np.log10(power):.4f}"


def format_solution(solution: Solution) -> str:
    """Human-readable record; station indices are printed 1-based."""
    lines = [f"status: {solution.status}"]
    if solution.association is not None:
        shown = [q + 1 for q in solution.association]
        lines.append(f"association: {shown}")
        powers = ", ".join(f"{p:.10g}" for p in solution.per_bs_power)
        dbs = ", ".join(_dbw(p) for p in solution.per_bs_power)
        lines.append(f"per-BS power (W): [{powers}]")
        lines.append(f"per-BS power (dBW): [{dbs}]")
        lines.append(f"objective (W): {solution.objective:.10g}")
        lines.append(f"dual value (W): {solution.dual_value:.10g}")
    lines.append(f"iterations: {solution.iterations}")
    return "\n".join(lines) + "\n"

"""Joint base-station selection and downlink beamforming via duality.

The solver minimizes weighted sum transmit power or the per-station
transmit-power margin over coordinated clusters in which each mobile is
dynamically assigned to exactly one serving station, with brute-force
oracles for desk-scale certification and a Monte Carlo harness for
scheme comparisons.
"""

from .config import ScenarioConfig, build_instance, load_config, parse_config
from .duality import (DualState, FixedPointOutcome, ReceiverSet, downlink_sinr,
                      fixed_point_solve, foschini_miljanic_scaling,
                      mmse_receivers, power_coupling_matrix, required_power_map,
                      residue_trace_csv, select_association,
                      solve_downlink_scaling)
from .errors import (ConfigError, DegenerateAssociationError,
                     DegenerateGeometryError, DpsbeamError,
                     EnumerationGuardError, InfeasibleScalingError)
from .harness import (ExperimentReport, TrialRecord, emit_csv, run_campaign,
                      run_trial)
from .margin import (FixedMargin, MarginDual, MarginSolution,
                     extract_association_margin, format_margin,
                     margin_within_budget, solve_dps_margin, solve_margin_dual,
                     solve_margin_fixed)
from .oracle import (VerificationReport, brute_force_margin,
                     brute_force_sum_power, enumerate_associations,
                     verify_solution)
from .scenario import (ChannelSet, Clustering, Geometry, ProblemInstance,
                       build_clusters, fixed_association, generate_channels,
                       layout_seven_cell, layout_two_cell, place_mobiles)
from .sum_power import (Solution, SweepPoint, format_solution, full_beam_grid,
                        pareto_sweep, solve_cscb_fixed, solve_dps_sum_power)

__version__ = "0.1.0"

__all__ = [
    "ChannelSet", "Clustering", "ConfigError", "DegenerateAssociationError",
    "DegenerateGeometryError", "DpsbeamError", "DualState",
    "EnumerationGuardError", "ExperimentReport", "FixedMargin",
    "FixedPointOutcome", "Geometry", "InfeasibleScalingError", "MarginDual",
    "MarginSolution", "ProblemInstance", "ReceiverSet", "ScenarioConfig",
    "Solution", "SweepPoint", "TrialRecord", "VerificationReport",
    "brute_force_margin", "brute_force_sum_power", "build_clusters",
    "build_instance", "downlink_sinr", "emit_csv", "enumerate_associations",
    "extract_association_margin", "fixed_association", "fixed_point_solve",
    "format_margin", "format_solution", "foschini_miljanic_scaling",
    "full_beam_grid", "generate_channels", "layout_seven_cell",
    "layout_two_cell", "load_config", "margin_within_budget", "mmse_receivers",
    "parse_config", "pareto_sweep", "place_mobiles", "power_coupling_matrix",
    "required_power_map", "residue_trace_csv", "run_campaign", "run_trial",
    "select_association", "solve_cscb_fixed", "solve_downlink_scaling",
    "solve_dps_margin", "solve_dps_sum_power", "solve_margin_dual",
    "solve_margin_fixed", "verify_solution",
]

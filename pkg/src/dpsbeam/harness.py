"""Monte Carlo campaign driver: paired trials, schemes, aggregates, CSV.

Every trial draws one scenario from seed_base + trial and reuses that draw
across all SINR grid points and schemes, so scheme comparisons are paired
sample by sample.  Means are taken only over trials feasible under every
compared scheme at that grid point, which avoids survivorship bias when
schemes differ in feasibility rate.  Aggregation is a commutative reduction
over deterministic per-trial rows, so output files are byte-identical for a
fixed config regardless of worker scheduling.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass

import numpy as np

from . import config as config_mod
from . import margin as margin_mod
from . import scenario, sum_power
from .errors import ConfigError, DpsbeamError

SCHEMES = ("dps", "cscb_channel", "cscb_location", "dps_3cell",
           "dps_universal")
MODES = ("sum_power", "margin")


@dataclass(frozen=True)
class TrialRecord:
    """One (grid point, trial, scheme) outcome.

    objective is the weighted sum power in watts (sum-power mode) or the
    achieved margin (linear, margin mode); None when not feasible.
    """

    gamma_db: float
    trial: int
    seed: int
    scheme: str
    status: str
    objective: float = None

    @property
    def feasible(self) -> bool:
        return self.objective is not None


@dataclass(frozen=True)
class AggregateRow:
    gamma_db: float
    scheme: str
    feasibility_rate: float
    mean_sum_power_dbw: float = None
    mean_margin_db: float = None
    trials: int = 0


@dataclass(frozen=True)
class ExperimentReport:
    """Campaign outcome: aggregates per (grid point, scheme) plus raw rows."""

    mode: str
    seed_base: int
    schemes: tuple
    gamma_grid_db: tuple
    trial_count: int
    aggregates: tuple
    trials: tuple


def _scheme_clusterings(instance, schemes):
    """Clustering override per scheme; None keeps the config clustering."""
    out = {}
    geometry = instance.geometry
    for scheme in schemes:
        if scheme == "dps_universal":
            out[scheme] = scenario.build_clusters(geometry, "universal")
        elif scheme == "dps_3cell":
            if instance.num_bs != 7:
                raise ConfigError("dps_3cell runs on the seven-cell layout")
            out[scheme] = scenario.build_clusters(
                geometry, "grouped", scenario.SEVEN_CELL_GROUPS)
        else:
            out[scheme] = None
    return out


def _solve_scheme(instance, scheme, mode, clusterings, associations,
                  tolerance):
    kwargs = {} if tolerance is None else {"tolerance": tolerance}
    clustering = clusterings[scheme]
    if clustering is not None:
        instance = instance.with_clustering(clustering)
    if scheme in ("cscb_channel", "cscb_location"):
        if mode == "sum_power":
            sol = sum_power.solve_cscb_fixed(instance, associations[scheme],
                                             **kwargs)
            return sol.status, sol.objective if sol.feasible else None
        fixed = margin_mod.solve_margin_fixed(instance, associations[scheme])
        return fixed.status, fixed.alpha
    if mode == "sum_power":
        sol = sum_power.solve_dps_sum_power(instance, **kwargs)
        return sol.status, sol.objective if sol.feasible else None
    msol = margin_mod.solve_dps_margin(instance)
    return msol.status, msol.alpha_upper if msol.feasible else None


def run_trial(cfg, schemes, sinr_grid_db, mode, seed, trial,
              tolerance=None) -> list:
    """All records of one trial (every grid point and scheme, shared draw)."""
    instance0 = config_mod.build_instance(cfg, seed=seed)
    clusterings = _scheme_clusterings(instance0, schemes)
    associations = {}
    for scheme in schemes:
        if scheme == "cscb_channel":
            associations[scheme] = scenario.fixed_association(
                instance0, "channel_based")
        elif scheme == "cscb_location":
            associations[scheme] = scenario.fixed_association(
                instance0, "location_based")
    records = []
    for gamma_db in sinr_grid_db:
        instance = config_mod.with_gamma_db(instance0, gamma_db)
        for scheme in schemes:
            try:
                status, objective = _solve_scheme(
                    instance, scheme, mode, clusterings, associations,
                    tolerance)
            except DpsbeamError as exc:
                status, objective = f"error:{type(exc).__name__}", None
            records.append(TrialRecord(
                gamma_db=float(gamma_db), trial=trial, seed=seed,
                scheme=scheme, status=status,
                objective=None if objective is None else float(objective)))
    return records


def _run_trial_star(args):
    return run_trial(*args)


def run_campaign(cfg, schemes, sinr_grid_db, trials, mode="sum_power",
                 seed_base=None, workers=1,
                 tolerance=None) -> ExperimentReport:
    """Paired Monte Carlo campaign over the grid; deterministic per config."""
    schemes = tuple(schemes)
    if not schemes or any(s not in SCHEMES for s in schemes):
        raise ConfigError(f"schemes must be a nonempty subset of {SCHEMES}")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    grid = tuple(float(g) for g in sinr_grid_db)
    seed_base = cfg.seed if seed_base is None else int(seed_base)

    jobs = [(cfg, schemes, grid, mode, seed_base + t, t, tolerance)
            for t in range(trials)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            per_trial = list(ex.map(_run_trial_star, jobs, chunksize=4))
    else:
        per_trial = [run_trial(*job) for job in jobs]
    records = tuple(rec for batch in per_trial for rec in batch)

    aggregates = []
    for gamma_db in grid:
        at_gamma = [r for r in records if r.gamma_db == gamma_db]
        by_scheme = {s: {r.trial: r for r in at_gamma if r.scheme == s}
                     for s in schemes}
        shared = [t for t in range(trials)
                  if all(by_scheme[s][t].feasible for s in schemes)]
        for scheme in schemes:
            rows = by_scheme[scheme]
            rate = sum(1 for r in rows.values() if r.feasible) / trials
            mean_db = None
            if shared:
                mean = float(np.mean([rows[t].objective for t in shared]))
                if mean > 0:
                    mean_db = 10.0 * float(np.log10(mean))
            aggregates.append(AggregateRow(
                gamma_db=gamma_db, scheme=scheme, feasibility_rate=rate,
                mean_sum_power_dbw=mean_db if mode == "sum_power" else None,
                mean_margin_db=mean_db if mode == "margin" else None,
                trials=len(shared)))
    return ExperimentReport(mode=mode, seed_base=seed_base, schemes=schemes,
                            gamma_grid_db=grid, trial_count=trials,
                            aggregates=tuple(aggregates), trials=records)


def _fmt(value) -> str:
    return "nan" if value is None else f"{value:.9g}"


def emit_csv(report: ExperimentReport, out_dir) -> tuple:
    """Write aggregate.csv and trials.csv into out_dir; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("gamma_db,scheme,feasibility_rate,mean_sum_power_dbw,"
                 "mean_margin_db,trials\n")
        for row in report.aggregates:
            fh.write(f"{_fmt(row.gamma_db)},{row.scheme},"
                     f"{_fmt(row.feasibility_rate)},"
                     f"{_fmt(row.mean_sum_power_dbw)},"
                     f"{_fmt(row.mean_margin_db)},{row.trials}\n")
    trials_path = os.path.join(out_dir, "trials.csv")
    with open(trials_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("gamma_db,trial,seed,scheme,status,objective\n")
        for rec in report.trials:
            fh.write(f"{_fmt(rec.gamma_db)},{rec.trial},{rec.seed},"
                     f"{rec.scheme},{rec.status},{_fmt(rec.objective)}\n")
    return agg_path, trials_path

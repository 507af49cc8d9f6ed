"""Command-line interface.

Subcommands: solve, margin, sweep-weights, campaign, oracle-check, trace.
Every subcommand takes a scenario config file plus optional --seed and
--tol overrides.  Exit codes: 0 success, 1 certification mismatch
(oracle-check), 2 usage or configuration errors.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import config as config_mod
from . import duality, harness, margin, oracle, sum_power
from .errors import DpsbeamError


def _gamma_grid(spec: str):
    """Parse '--gammas a:b:step' (inclusive) or a comma-separated list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError("expected a:b:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("step must be positive")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        if count < 1:
            raise ValueError("empty gamma range")
        return tuple(start + k * step for k in range(count))
    return tuple(float(p) for p in spec.split(",") if p.strip())


def _build(args):
    cfg = config_mod.load_config(args.config)
    instance = config_mod.build_instance(cfg, seed=args.seed)
    return cfg, instance


def _cmd_solve(args) -> int:
    _, instance = _build(args)
    kwargs = {} if args.tol is None else {"tolerance": args.tol}
    solution = sum_power.solve_dps_sum_power(instance, **kwargs)
    sys.stdout.write(sum_power.format_solution(solution))
    return 0


def _cmd_margin(args) -> int:
    _, instance = _build(args)
    solution = margin.solve_dps_margin(instance)
    sys.stdout.write(margin.format_margin(solution,
                                          power_caps=instance.power_caps))
    return 0


def _cmd_sweep(args) -> int:
    _, instance = _build(args)
    if args.grid < 1:
        raise DpsbeamError("--grid must be at least 1")
    weights = [(k + 1) / (args.grid + 1) for k in range(args.grid)]
    points = sum_power.pareto_sweep(instance, weights)
    sys.stdout.write(
        "weight_first,weight_second,power_first,power_second,"
        "objective,status\n")
    for pt in points:
        if pt.per_bs_power is None:
            powers = "nan,nan"
            objective = "nan"
        else:
            powers = f"{pt.per_bs_power[0]:.9g},{pt.per_bs_power[1]:.9g}"
            objective = f"{pt.objective:.9g}"
        sys.stdout.write(f"{pt.weight_first:.9g},{pt.weight_second:.9g},"
                         f"{powers},{objective},{pt.status}\n")
    return 0


def _cmd_campaign(args) -> int:
    cfg = config_mod.load_config(args.config)
    grid = _gamma_grid(args.gammas)
    schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    report = harness.run_campaign(cfg, schemes, grid, args.trials,
                                  mode=args.mode, seed_base=args.seed,
                                  workers=args.workers, tolerance=args.tol)
    agg_path, trials_path = harness.emit_csv(report, args.out)
    sys.stdout.write(f"wrote {agg_path}\nwrote {trials_path}\n")
    return 0


def _cmd_oracle_check(args) -> int:
    cfg = config_mod.load_config(args.config)
    seed0 = cfg.seed if args.seed is None else args.seed
    failures = 0
    for n in range(args.instances):
        instance = config_mod.build_instance(cfg, seed=seed0 + n)
        solution = sum_power.solve_dps_sum_power(instance)
        bf_assoc, bf_objective = oracle.brute_force_sum_power(instance)
        ok = True
        detail = ""
        if solution.feasible != (bf_assoc is not None):
            ok = False
            detail = (f"feasibility mismatch: solver={solution.status} "
                      f"oracle={'feasible' if bf_assoc else 'infeasible'}")
        elif solution.feasible:
            rel = abs(solution.objective - bf_objective) / bf_objective
            report = oracle.verify_solution(instance, solution)
            if rel > 1e-6:
                ok = False
                detail = f"objective mismatch: rel={rel:.3e}"
            elif not report.passed:
                ok = False
                detail = "verifier: " + "; ".join(
                    c.name for c in report.checks if not c.passed)
            else:
                detail = (f"objective={solution.objective:.9g} "
                          f"rel={rel:.2e}")
        else:
            detail = "infeasible (agreed)"
        failures += 0 if ok else 1
        flag = "PASS" if ok else "FAIL"
        sys.stdout.write(f"instance {n} seed {seed0 + n}: {flag} {detail}\n")
    sys.stdout.write(f"{args.instances - failures}/{args.instances} "
                     f"instances certified\n")
    return 1 if failures else 0


def _cmd_trace(args) -> int:
    _, instance = _build(args)
    kwargs = {} if args.tol is None else {"tolerance": args.tol}
    outcome = duality.fixed_point_solve(instance, **kwargs)
    sys.stdout.write(duality.residue_trace_csv(outcome))
    sys.stdout.write(f"# status: {outcome.status}\n")
    return 0


def main(argv=None) -> int:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--tol", type=float, default=None,
                        help="override the fixed-point tolerance")

    parser = argparse.ArgumentParser(
        prog="dpsbeam",
        description="Joint station selection and downlink beamforming "
                    "via uplink-downlink duality.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common],
                       help="minimize weighted sum power on one instance")
    p.add_argument("config")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("margin", parents=[common],
                       help="minimize the per-station power margin")
    p.add_argument("config")
    p.set_defaults(func=_cmd_margin)

    p = sub.add_parser("sweep-weights", parents=[common],
                       help="trace the two-station power trade-off")
    p.add_argument("config")
    p.add_argument("--grid", type=int, default=9,
                   help="number of interior weight points")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("campaign", parents=[common],
                       help="Monte Carlo comparison campaign")
    p.add_argument("config")
    p.add_argument("--gammas", required=True,
                   help="SINR grid in dB: a:b:step or comma list")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--schemes", default="dps,cscb_channel,cscb_location",
                   help="comma list from " + ",".join(harness.SCHEMES))
    p.add_argument("--mode", choices=harness.MODES, default="sum_power")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_campaign)

    p = sub.add_parser("oracle-check", parents=[common],
                       help="certify the solver against brute force")
    p.add_argument("config")
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(func=_cmd_oracle_check)

    p = sub.add_parser("trace", parents=[common],
                       help="emit the convergence residue trace as CSV")
    p.add_argument("config")
    p.set_defaults(func=_cmd_trace)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DpsbeamError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

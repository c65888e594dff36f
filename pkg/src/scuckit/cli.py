"""Command line interface: `scuckit solve <instance.json>` and
`scuckit bench <dir>`."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import driver, lp_backends
from .driver import DriverConfig, RunReport
from .instance import InstanceError, load_instance
from .lp_kernel import Precision


def _add_solve_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=0.1,
                   help="stage-1 rounding confidence threshold (default 0.1)")
    p.add_argument("--tau2", type=float, default=0.1,
                   help="stage-2 rounding confidence threshold (default 0.1)")
    p.add_argument("--rounds1", type=int, default=2, help="stage-1 fixing rounds")
    p.add_argument("--rounds2", type=int, default=4, help="stage-2 fixing rounds")
    p.add_argument("--gap1", type=float, default=0.01, help="stage-1 MILP gap")
    p.add_argument("--gap2", type=float, default=0.001, help="stage-2 MILP gap")
    p.add_argument("--precision", choices=["fp32", "fp64"], default="fp64")
    p.add_argument("--no-instance-scaling", action="store_true",
                   help="disable instance-aware scaling (enables Ruiz scaling instead)")
    p.add_argument("--no-fixing", action="store_true",
                   help="skip the successive-fixing loop")
    p.add_argument("--lp-solver", choices=list(lp_backends.BACKENDS), default="hpr")
    p.add_argument("--time-limit", type=float, default=None, help="seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", "-v", action="store_true")


def _config_from_args(args) -> DriverConfig:
    return DriverConfig(
        tau=args.tau, tau2=args.tau2,
        rounds1=args.rounds1, rounds2=args.rounds2,
        gap1=args.gap1, gap2=args.gap2,
        precision=Precision(args.precision),
        instance_scaling=not args.no_instance_scaling,
        fixing=not args.no_fixing,
        lp_backend=args.lp_solver,
        time_limit=args.time_limit,
        seed=args.seed,
    )


def _print_summary(report: RunReport) -> None:
    print(f"status        : {report.status}")
    print(f"objective     : {report.objective:.6f}")
    print(f"passes        : {len(report.passes)}")
    print(f"monitored     : {len(report.monitored)} flow triples")
    print(f"nodes         : {report.nodes_total}")
    print(f"fixed triples : {report.fixing_summary['total_fixed_triples']}")
    print(f"time          : {report.total_time:.2f}s "
          f"(LP relaxations {report.lp_time:.2f}s, other {report.other_time:.2f}s)")


def _cmd_solve(args) -> int:
    try:
        inst = load_instance(args.instance)
    except (InstanceError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return driver.EXIT_INPUT_ERROR
    config = _config_from_args(args)
    if args.iter_log:
        config.log_solver_residuals = True
        config.iter_log_path = args.iter_log
    report = driver.run(inst, config, reference_objective=args.reference)
    _print_summary(report)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report.to_json_dict(), fh, indent=2)
        print(f"report written to {args.report}")
    return report.exit_code


def _cmd_bench(args) -> int:
    paths = sorted(Path(args.directory).glob("*.json"))
    if not paths:
        print(f"input error: no .json instances under {args.directory}", file=sys.stderr)
        return driver.EXIT_INPUT_ERROR
    config = _config_from_args(args)
    rows = []
    worst = 0
    for path in paths:
        try:
            inst = load_instance(path)
        except InstanceError as exc:
            print(f"skipping {path.name}: {exc}", file=sys.stderr)
            worst = max(worst, driver.EXIT_INPUT_ERROR)
            continue
        report = driver.run(inst, config)
        worst = max(worst, report.exit_code)
        rows.append({
            "instance": path.stem,
            "status": report.status,
            "objective": report.objective,
            "total_time": report.total_time,
            "lp_time": report.lp_time,
            "other_time": report.other_time,
            "passes": len(report.passes),
            "monitored": len(report.monitored),
            "nodes": report.nodes_total,
            "fixed_triples": report.fixing_summary["total_fixed_triples"],
        })
        print(f"{path.stem:<24} {report.status:<16} obj={report.objective:.4f} "
              f"time={report.total_time:.2f}s")
    out = args.csv or "bench.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    times = [r["total_time"] for r in rows]
    print(f"\ninstances: {len(rows)}  SGM10 runtime: {driver.sgm10(times):.3f}s")
    print(f"per-instance CSV written to {out}")
    return worst


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="scuckit",
                                     description="SCUC solver toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one instance")
    p_solve.add_argument("instance")
    _add_solve_options(p_solve)
    p_solve.add_argument("--report", default=None, help="write a JSON run report")
    p_solve.add_argument("--iter-log", default=None,
                         help="write LP iteration logs as CSV")
    p_solve.add_argument("--reference", type=float, default=None,
                         help="reference objective for the relative-gap metric")
    p_solve.set_defaults(func=_cmd_solve)

    p_bench = sub.add_parser("bench", help="solve every instance in a directory")
    p_bench.add_argument("directory")
    _add_solve_options(p_bench)
    p_bench.add_argument("--csv", default=None, help="output CSV path (default bench.csv)")
    p_bench.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False)
                        else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

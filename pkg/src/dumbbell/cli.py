"""Command-line entry point: ``dumbbell <subcommand> [--config PATH] [--out DIR] [--override key=value ...]``.

Exit codes: 0 success, 1 configuration/input/checkpoint error, 2 solver error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .diagnostics import DiagnosticsRecord
from .errors import CheckpointError, ConfigurationError, InputError, SolverError
from .harness import refinement_study
from .io import (format_number, diagnose_checkpoint, format_config, load_config, plan_to_raw, run_with_output,
                 write_convergence_csv)

SUBCOMMANDS = ("simulate", "compare", "refine", "diagnose", "validate-config")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dumbbell", description="Hookean dumbbell / Oldroyd-B micro-macro simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        if name == "diagnose":
            s.add_argument("--checkpoint", required=True, help="checkpoint file to recompute")
            continue
        s.add_argument("--config", help="config file (defaults to the shipped desk-scale config)")
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        if name != "validate-config":
            s.add_argument("--out", help="output directory (overrides out_dir)")
    return p


def _print_row(rec: DiagnosticsRecord):
    print(",".join(DiagnosticsRecord.columns()))
    print(",".join(format_number(v) for v in rec.as_row()))


def _summary(res):
    last = res.records[-1]
    print(f"finished t={last.t!r} step={last.step} samples={len(res.records)}")


def _dispatch(args) -> int:
    if args.command == "diagnose":
        _print_row(diagnose_checkpoint(args.checkpoint))
        return 0
    plan = load_config(args.config, args.override)
    if args.command == "validate-config":
        print(format_config(plan_to_raw(plan)), end="")
        return 0
    out = args.out or plan.out_dir
    if args.command == "compare":
        plan = replace(plan, model="compare")
        plan.validate()
    if args.command in ("simulate", "compare"):
        res = run_with_output(plan, out)
        _summary(res)
        if out:
            print(f"output written to {out}")
        return 0
    rows = refinement_study(plan)
    cols = ("level", "dt", "n", "nq", "gap_l2", "residual_nsfp_max", "residual_ob_max", "order")
    print(",".join(cols))
    for r in rows:
        print(",".join(format_number(r[c]) for c in cols))
    if out:
        os.makedirs(out, exist_ok=True)
        write_convergence_csv(rows, os.path.join(out, "convergence.csv"))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigurationError, InputError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

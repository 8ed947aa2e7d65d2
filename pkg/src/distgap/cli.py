"""Command line interface.

The subcommands compose into the full experiment pipeline:

    distgap sweep --out DIR                      fixed grid -> DIR/sweep.csv
    distgap select --table DIR/sweep.csv --out DIR   -> DIR/selections.json
    distgap control --table ... --selections ... --out DIR -> DIR/control.csv
    distgap report --table ... [--control ...] --out DIR   -> panels, manifest
    distgap run --out DIR                        one run -> run.csv, final.json

Every command exits 0 on success. Failures print a one-line JSON object
``{"error": <type>, "message": <text>}`` to stderr and exit nonzero (2 for
usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import DistgapError
from .harness import (
    SweepTable,
    default_run_config,
    default_sweep_config,
    emit_reports,
    final_payload,
    fixed_controller,
    load_run_config,
    load_selections,
    load_sweep_config,
    run_controller_grid,
    run_fixed_grid,
    run_one,
    save_selections,
    save_sweep_config,
    select_best_fixed,
    _stderr_progress,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); raise instead
        raise _UsageError(message)


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _print(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _progress(args):
    return None if args.quiet else _stderr_progress


def cmd_run(args) -> int:
    cfg = load_run_config(args.config) if args.config else default_run_config()
    if args.beta is not None:
        cfg = replace(cfg, task=replace(cfg.task, beta=args.beta))
    if args.lam is not None:
        cfg = replace(cfg, controller=fixed_controller(cfg.controller, args.lam))
    if args.run_seed is not None:
        cfg = replace(cfg, run_seed=args.run_seed)
    result = run_one(cfg, out_dir=args.out)
    _print(final_payload(result))
    return 0


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(","))


def cmd_sweep(args) -> int:
    sweep = load_sweep_config(args.config) if args.config else default_sweep_config()
    if args.beta is not None:
        sweep = replace(sweep, betas=args.beta)
    if args.lambdas is not None:
        sweep = replace(sweep, lambdas=args.lambdas)
    if args.seeds is not None:
        sweep = replace(sweep, seeds=args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = run_fixed_grid(sweep, threads=args.threads, progress=_progress(args))
    table.save(out / "sweep.csv")
    save_sweep_config(out / "config.yaml", sweep)
    _print({
        "table": str(out / "sweep.csv"),
        "rows": len(table),
        "ok": len(table.ok_rows()),
        "errors": len(table.failed_rows()),
    })
    return 0


def cmd_select(args) -> int:
    table = SweepTable.load(args.table)
    betas = sorted({r.beta for r in table.rows() if r.policy == "fixed"})
    selections = select_best_fixed(table, betas)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_selections(out / "selections.json", selections)
    _print({
        "selections": str(out / "selections.json"),
        **{repr(b): selections[b]._asdict() for b in sorted(selections)},
    })
    return 0


def cmd_control(args) -> int:
    sweep = load_sweep_config(args.config) if args.config else default_sweep_config()
    selections = load_selections(args.selections) if args.selections else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = run_controller_grid(
        sweep, selections, threads=args.threads, progress=_progress(args)
    )
    table.save(out / "control.csv")
    paths = {"table": str(out / "control.csv")}
    if args.table:
        combined = SweepTable.load(args.table).merged(table)
        combined.save(out / "combined.csv")
        paths["combined"] = str(out / "combined.csv")
    _print({
        **paths,
        "rows": len(table),
        "ok": len(table.ok_rows()),
        "errors": len(table.failed_rows()),
    })
    return 0


def cmd_report(args) -> int:
    table = SweepTable.load(args.table)
    if args.control:
        table = table.merged(SweepTable.load(args.control))
    if args.selections:
        selections = load_selections(args.selections)
    else:
        betas = sorted({r.beta for r in table.rows() if r.policy == "fixed"})
        selections = select_best_fixed(table, betas)
    emit_reports(table, selections, args.out)
    _print({
        "out": args.out,
        "panels": ["panel_a.csv", "panel_b.csv", "panel_c.csv", "panel_d.csv"],
        "manifest": str(Path(args.out) / "manifest.json"),
    })
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="distgap",
                     description="distance-profile mismatch experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one model on one sampled task")
    run.add_argument("--config", help="YAML run config (defaults built in)")
    run.add_argument("--out", help="directory for run.csv / final.json")
    run.add_argument("--beta", type=float, help="override task mixture weight")
    run.add_argument("--lam", type=float,
                     help="run with this fixed bias slope")
    run.add_argument("--run-seed", type=int, help="override the run seed")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run the fixed-lambda grid")
    sweep.add_argument("--config", help="YAML sweep config")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.add_argument("--beta", type=_floats,
                       help="comma-separated beta grid override")
    sweep.add_argument("--lambda", dest="lambdas", type=_floats,
                       help="comma-separated lambda grid override "
                            "(write --lambda=-1,0,2 when it starts negative)")
    sweep.add_argument("--seeds", type=_ints,
                       help="comma-separated run seed override")
    sweep.add_argument("--threads", type=int, default=1)
    sweep.add_argument("--quiet", action="store_true",
                       help="suppress per-run progress on stderr")
    sweep.set_defaults(func=cmd_sweep)

    select = sub.add_parser("select",
                            help="pick lambda* (best non-negative slope by "
                                 "validation accuracy) and oracle gap "
                                 "targets per beta")
    select.add_argument("--table", required=True, help="sweep.csv from `sweep`")
    select.add_argument("--out", required=True, help="output directory")
    select.set_defaults(func=cmd_select)

    control = sub.add_parser("control", help="run the gap-driven controllers")
    control.add_argument("--config", help="YAML sweep config")
    control.add_argument("--table", help="fixed sweep.csv to merge into combined.csv")
    control.add_argument("--selections",
                         help="selections.json (needed for target_gap)")
    control.add_argument("--out", required=True, help="output directory")
    control.add_argument("--threads", type=int, default=1)
    control.add_argument("--quiet", action="store_true")
    control.set_defaults(func=cmd_control)

    report = sub.add_parser("report", help="emit panel CSVs and a manifest")
    report.add_argument("--table", required=True, help="sweep table CSV")
    report.add_argument("--control", help="extra controller table to merge")
    report.add_argument("--selections", help="selections.json; recomputed "
                        "from the table when omitted")
    report.add_argument("--out", required=True, help="output directory")
    report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        _emit_error("UsageError", str(exc))
        return 2
    except DistgapError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    except FileNotFoundError as exc:
        _emit_error("FileNotFoundError", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())

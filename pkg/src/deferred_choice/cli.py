"""Command-line entry point.

Subcommands:

* ``run <file>`` — replay one scenario file; writes report.csv and
  receipts.log.
* ``correctness`` — random-scenario correctness experiment; writes a
  summary table as report.csv.
* ``cost`` — cost grid over consumers x updates; writes per-cell
  report.csv and a globally min-max normalized heatmap.csv.

``--gas-schedule`` accepts a JSON file overriding schedule constants, e.g.
``{"tx_base": 30000, "deploy_per_contract": {"storage-oracle": 1}}``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import (
    correctness_rows,
    heatmap_rows,
    report_rows,
    run_correctness_experiment,
    run_cost_experiment,
    write_correctness_csv,
    write_heatmap_csv,
    write_receipts_log,
    write_report_csv,
)
from .ledger import GasSchedule
from .oracles import ALL_VARIANTS, OracleVariant
from .scenario import Scenario, ScenarioError, run

DEFAULT_SEED = 11


def _parse_int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _parse_variants(text: str) -> list[OracleVariant]:
    if text.strip() == "all":
        return list(ALL_VARIANTS)
    return [OracleVariant.parse(part) for part in text.split(",") if part]


def _load_schedule(path: str | None) -> GasSchedule:
    schedule = GasSchedule()
    if path is None:
        return schedule
    with open(path) as handle:
        overrides = json.load(handle)
    return schedule.with_overrides(overrides)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args: argparse.Namespace) -> int:
    schedule = _load_schedule(args.gas_schedule)
    try:
        scenario = Scenario.from_json(Path(args.scenario).read_text())
        report = run(scenario, schedule)
    except (OSError, ScenarioError) as error:
        print(f"error: {error}", file=sys.stderr)
        return 2
    out = _out_dir(args.out)
    write_report_csv(out / "report.csv", report_rows([report]))
    write_receipts_log(out / "receipts.log", [report])
    winner = "nil" if report.winner is None else report.winner
    print(
        f"{scenario.scenario_id}: winner={winner} truth="
        f"{'nil' if report.truth is None else report.truth} "
        f"correct={str(report.correct).lower()} gas_total={report.gas_total}"
    )
    return 0


def cmd_correctness(args: argparse.Namespace) -> int:
    schedule = _load_schedule(args.gas_schedule)
    variants = _parse_variants(args.variants)
    ks = _parse_int_list(args.k)
    results = run_correctness_experiment(args.n, ks, variants, args.seed, schedule)
    rows = correctness_rows(results)
    out = _out_dir(args.out)
    write_correctness_csv(out / "report.csv", rows)
    for row in rows:
        regular = f"{row.regular_pct:5.1f}%" if row.regular_total else "    -"
        conditional = (
            f"{row.conditional_pct:5.1f}%" if row.conditional_total else "    -"
        )
        print(
            f"{row.semantics:20s} {row.architecture:18s} "
            f"reg={regular} cond={conditional}"
        )
    return 0


def cmd_cost(args: argparse.Namespace) -> int:
    schedule = _load_schedule(args.gas_schedule)
    variants = _parse_variants(args.variants)
    cs = _parse_int_list(args.c)
    us = _parse_int_list(args.u)
    if not cs or not us:
        print("error: empty grid", file=sys.stderr)
        return 2
    reports = run_cost_experiment(cs, us, variants, schedule)
    out = _out_dir(args.out)
    write_report_csv(out / "report.csv", report_rows(reports))
    write_heatmap_csv(out / "heatmap.csv", heatmap_rows(reports))
    print(f"wrote {len(reports)} cells for {len(variants)} variants to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deferred-choice",
        description="Deterministic deferred-choice simulator and experiment harness",
    )
    parser.add_argument(
        "--gas-schedule", metavar="FILE", help="JSON file with gas schedule overrides"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="replay one scenario file")
    run_parser.add_argument("scenario", help="scenario JSON file")
    run_parser.add_argument("--out", default="out", help="output directory")
    run_parser.set_defaults(func=cmd_run)

    corr = commands.add_parser("correctness", help="correctness experiment")
    corr.add_argument("--n", type=int, default=60, help="scenarios per variant")
    corr.add_argument("--k", default="5,10", help="comma list of event counts")
    corr.add_argument("--variants", default="all", help="comma list or 'all'")
    corr.add_argument("--seed", type=int, default=DEFAULT_SEED)
    corr.add_argument("--out", default="out", help="output directory")
    corr.set_defaults(func=cmd_correctness)

    cost = commands.add_parser("cost", help="cost experiment grid")
    cost.add_argument("--c", default="5,10,20", help="comma list of consumer counts")
    cost.add_argument("--u", default="1,10,20,30", help="comma list of update counts")
    cost.add_argument("--variants", default="all", help="comma list or 'all'")
    cost.add_argument("--out", default="out", help="output directory")
    cost.set_defaults(func=cmd_cost)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    try:
        return args.func(args)
    except Exception as error:  # surface anything unexpected as a diagnostic
        print(f"error: {error}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

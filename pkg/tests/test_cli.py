import json
from pathlib import Path

import pytest

from deferred_choice.cli import main
from deferred_choice.experiments import (
    read_correctness_csv,
    read_heatmap_csv,
    read_report_csv,
)

TABLE1 = Path(__file__).resolve().parent.parent / "scenarios" / "table1.json"


def test_run_table1(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(TABLE1), "--out", str(out)]) == 0
    rows = read_report_csv(out / "report.csv")
    assert len(rows) == 1
    assert rows[0].winner == 0
    assert rows[0].truth == 0
    assert rows[0].correct is True
    receipts = (out / "receipts.log").read_text().splitlines()
    assert receipts
    record = json.loads(receipts[0])
    assert {"step", "from", "to", "function", "payload_bytes", "gas_used", "status", "logs"} <= set(record)


def test_run_malformed_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad), "--out", str(tmp_path / "out")]) != 0


def test_run_missing_file(tmp_path):
    assert main(["run", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) != 0


def test_run_empty_timeline(tmp_path):
    scenario = tmp_path / "empty.json"
    scenario.write_text(
        json.dumps(
            {
                "id": "empty",
                "variant": "pubsub",
                "semantics": "transaction-driven",
                "oracles": [],
                "choices": [{"events": [{"kind": "message"}]}],
                "timeline": [],
            }
        )
    )
    out = tmp_path / "out"
    assert main(["run", str(scenario), "--out", str(out)]) == 0
    rows = read_report_csv(out / "report.csv")
    assert rows[0].winner is None


def test_correctness_smoke(tmp_path):
    out = tmp_path / "corr"
    assert (
        main(
            [
                "correctness",
                "--n",
                "2",
                "--k",
                "5",
                "--variants",
                "onchain-history,storage",
                "--seed",
                "4",
                "--out",
                str(out),
            ]
        )
        == 0
    )
    rows = read_correctness_csv(out / "report.csv")
    by_arch = {row.architecture: row for row in rows}
    assert by_arch["onchain-history"].regular_correct == 2
    assert by_arch["onchain-history"].regular_total == 2


def test_correctness_single_scenario_smoke_is_fast(tmp_path):
    import time

    started = time.monotonic()
    assert (
        main(
            [
                "correctness",
                "--n",
                "1",
                "--k",
                "5",
                "--variants",
                "all",
                "--seed",
                "1",
                "--out",
                str(tmp_path / "smoke"),
            ]
        )
        == 0
    )
    assert time.monotonic() - started < 1.0


def test_cost_smoke_and_parse_back(tmp_path):
    out = tmp_path / "cost"
    assert (
        main(
            [
                "cost",
                "--c",
                "2,3",
                "--u",
                "1,5",
                "--variants",
                "storage,pubsub-cond",
                "--out",
                str(out),
            ]
        )
        == 0
    )
    rows = read_report_csv(out / "report.csv")
    assert len(rows) == 8  # 2 variants x 2 c values x 2 u values
    heat = read_heatmap_csv(out / "heatmap.csv")
    assert len(heat) == 8
    values = [row.normalized for row in heat]
    assert min(values) == 0.0 and max(values) == 1.0


def test_report_csv_round_trip(tmp_path):
    from deferred_choice.experiments import report_rows, write_report_csv
    from deferred_choice.oracles import OracleVariant
    from deferred_choice.scenario import Scenario, run

    scenario = Scenario.from_json(TABLE1.read_text())
    reports = [
        run(scenario.with_variant(OracleVariant.parse(v)))
        for v in ("onchain-history", "storage")
    ]
    rows = report_rows(reports)
    path = tmp_path / "report.csv"
    write_report_csv(path, rows)
    assert read_report_csv(path) == rows


def test_correctness_and_heatmap_csv_round_trip(tmp_path):
    from deferred_choice.experiments import (
        correctness_rows,
        heatmap_rows,
        run_correctness_experiment,
        run_cost_experiment,
        write_correctness_csv,
        write_heatmap_csv,
    )
    from deferred_choice.oracles import OracleVariant

    variants = [OracleVariant.parse("storage"), OracleVariant.parse("pubsub")]
    rows = correctness_rows(run_correctness_experiment(2, (5,), variants, seed=6))
    path = tmp_path / "correctness.csv"
    write_correctness_csv(path, rows)
    assert read_correctness_csv(path) == rows

    heat = heatmap_rows(run_cost_experiment([2], [1, 5], variants))
    heat_path = tmp_path / "heatmap.csv"
    write_heatmap_csv(heat_path, heat)
    assert read_heatmap_csv(heat_path) == heat


def test_gas_schedule_override(tmp_path):
    schedule = tmp_path / "schedule.json"
    schedule.write_text(json.dumps({"tx_base": 50_000}))
    out_default = tmp_path / "a"
    out_heavy = tmp_path / "b"
    assert main(["run", str(TABLE1), "--out", str(out_default)]) == 0
    assert main(["--gas-schedule", str(schedule), "run", str(TABLE1), "--out", str(out_heavy)]) == 0
    default_rows = read_report_csv(out_default / "report.csv")
    heavy_rows = read_report_csv(out_heavy / "report.csv")
    assert heavy_rows[0].gas_total > default_rows[0].gas_total

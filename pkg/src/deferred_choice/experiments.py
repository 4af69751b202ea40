"""Experiment generators, drivers and report serialization.

Two experiment families are provided:

* correctness — random deferred choices whose events occur strictly
  sequentially, three steps apart, so event 0 is the unambiguous winner;
  ranking implementations must always pick it, while the continual
  baseline only succeeds when the first event happens to be explicit.
* cost — ``c`` choices sharing a single oracle that receives ``u``
  updates; a trigger is sent to every choice at each fifth update and only
  the final update satisfies the condition.

A third generator emits unconstrained random scenarios for the
oracle-vs-reference equivalence suite.
"""

from __future__ import annotations

import csv
import json
import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from . import expr as exprlang
from .choice import SemanticsKind
from .ledger import GasSchedule, receipt_record
from .oracles import ALL_VARIANTS, Architecture, OracleVariant
from .scenario import (
    Action,
    ChoiceDecl,
    ExperimentReport,
    OracleDecl,
    Scenario,
    run,
)
from .semantics import (
    AbsoluteTimer,
    Conditional,
    EventSpec,
    Message,
    RelativeTimer,
)

TRANSACTION_DRIVEN_VARIANTS: tuple[OracleVariant, ...] = tuple(
    v for v in ALL_VARIANTS if not v.baseline
)
BASELINE_VARIANTS: tuple[OracleVariant, ...] = tuple(
    v for v in ALL_VARIANTS if v.baseline
)

_EVENT_SPACING = 3  # steps between consecutive event occurrences


def _kind_name(event: EventSpec) -> str:
    kind = event.kind
    if isinstance(kind, Message):
        return "message"
    if isinstance(kind, AbsoluteTimer):
        return "absolute-timer"
    if isinstance(kind, RelativeTimer):
        return "relative-timer"
    return "conditional"


def _semantics_for(variant: OracleVariant) -> SemanticsKind:
    return (
        SemanticsKind.CONTINUAL if variant.baseline else SemanticsKind.TRANSACTION_DRIVEN
    )


# --- correctness experiment ---------------------------------------------------


def gen_correctness(n: int, k: int, variant: OracleVariant, seed: int) -> list[Scenario]:
    """Random choices with k events occurring sequentially; event 0 first.

    Event types are sampled uniformly from message, relative timer and
    conditional. Conditions start unsatisfied and flip at the event's slot;
    each conditional event watches its own variable through its own oracle.
    The draw depends only on (n, k, seed), so every variant replays the
    same event sequences.
    """
    if n < 1 or k < 2:
        raise ValueError("need n >= 1 scenarios and k >= 2 events")
    rng = random.Random(seed)
    scenarios = []
    for index in range(n):
        kinds = [
            rng.choice(("message", "relative-timer", "conditional")) for _ in range(k)
        ]
        activation = 2
        occurrence = [activation + _EVENT_SPACING * (i + 1) for i in range(k)]
        events: list[EventSpec] = []
        bindings: dict[int, int] = {}
        oracles: list[OracleDecl] = []
        actions: list[Action] = [Action(step=activation, kind="activate", choice=0)]
        for eid, kind_name in enumerate(kinds):
            at = occurrence[eid]
            if kind_name == "message":
                events.append(EventSpec(eid, Message()))
                actions.append(Action(step=at, kind="message", choice=0, event=eid))
            elif kind_name == "relative-timer":
                events.append(EventSpec(eid, RelativeTimer(at - activation)))
            else:
                oracle_index = len(oracles)
                variable = f"x{oracle_index}"
                oracles.append(OracleDecl(variable))
                events.append(
                    EventSpec(eid, Conditional(exprlang.parse(f"{variable} >= 1")))
                )
                bindings[eid] = oracle_index
                actions.append(
                    Action(step=1, kind="update", oracle=oracle_index, value=0)
                )
                actions.append(
                    Action(step=at, kind="update", oracle=oracle_index, value=1)
                )
        final = occurrence[-1] + _EVENT_SPACING
        actions.append(Action(step=final, kind="trigger", choice=0))
        actions.sort(key=lambda a: (a.step, 0 if a.kind == "update" else 1))
        scenarios.append(
            Scenario(
                scenario_id=f"corr-k{k}-{index:04d}",
                variant=variant,
                semantics=_semantics_for(variant),
                oracles=tuple(oracles),
                choices=(ChoiceDecl(tuple(events), bindings),),
                timeline=tuple(actions),
                seed=seed,
            )
        )
    return scenarios


@dataclass
class CorrectnessRecord:
    scenario_id: str
    k: int
    first_event_kind: str
    winner: int | None
    truth: int | None
    correct: bool


def run_correctness_experiment(
    n: int,
    ks: Sequence[int],
    variants: Sequence[OracleVariant],
    seed: int,
    schedule: GasSchedule | None = None,
) -> dict[str, list[CorrectnessRecord]]:
    """n scenarios per variant, split evenly across the requested k values."""
    counts = [n // len(ks)] * len(ks)
    for i in range(n % len(ks)):
        counts[i] += 1
    results: dict[str, list[CorrectnessRecord]] = {}
    for variant in variants:
        records = []
        for k, count in zip(ks, counts):
            for scenario in gen_correctness(count, k, variant, seed * 1000 + k):
                report = run(scenario, schedule)
                records.append(
                    CorrectnessRecord(
                        scenario_id=f"{scenario.scenario_id}-{variant.id}",
                        k=k,
                        first_event_kind=_kind_name(scenario.choices[0].events[0]),
                        winner=report.winner,
                        truth=report.truth,
                        correct=report.correct,
                    )
                )
        results[variant.id] = records
    return results


@dataclass
class CorrectnessRow:
    semantics: str
    architecture: str
    regular_correct: int
    regular_total: int
    conditional_correct: int
    conditional_total: int

    @property
    def regular_pct(self) -> float:
        return 100.0 * self.regular_correct / max(self.regular_total, 1)

    @property
    def conditional_pct(self) -> float:
        return 100.0 * self.conditional_correct / max(self.conditional_total, 1)


_TABLE_ORDER = (
    (SemanticsKind.CONTINUAL, Architecture.STORAGE),
    (SemanticsKind.CONTINUAL, Architecture.REQUEST_RESPONSE),
    (SemanticsKind.TRANSACTION_DRIVEN, Architecture.ONCHAIN_HISTORY),
    (SemanticsKind.TRANSACTION_DRIVEN, Architecture.OFFCHAIN_HISTORY),
    (SemanticsKind.TRANSACTION_DRIVEN, Architecture.PUBSUB),
)


def correctness_rows(
    results: dict[str, list[CorrectnessRecord]]
) -> list[CorrectnessRow]:
    rows = []
    for semantics, architecture in _TABLE_ORDER:
        cells = {}
        for conditional in (False, True):
            records = results.get(OracleVariant(architecture, conditional).id, [])
            cells[conditional] = (
                sum(1 for r in records if r.correct),
                len(records),
            )
        if cells[False][1] == 0 and cells[True][1] == 0:
            continue
        rows.append(
            CorrectnessRow(
                semantics=semantics.value,
                architecture=architecture.value,
                regular_correct=cells[False][0],
                regular_total=cells[False][1],
                conditional_correct=cells[True][0],
                conditional_total=cells[True][1],
            )
        )
    return rows


# --- cost experiment ----------------------------------------------------------


def gen_cost(c: int, u: int, variant: OracleVariant) -> Scenario:
    """c consumers on one shared oracle, u updates, triggers at every fifth
    update (plus a final round when u is not a multiple of five); only the
    last update satisfies the condition."""
    if c < 1 or u < 1:
        raise ValueError("need c >= 1 consumers and u >= 1 updates")
    condition = f"x >= {u}"
    events = (EventSpec(0, Conditional(exprlang.parse(condition))),)
    choices = tuple(ChoiceDecl(events, {0: 0}) for _ in range(c))
    actions: list[Action] = [Action(step=1, kind="update", oracle=0, value=0)]
    activation = 2
    for choice in range(c):
        actions.append(Action(step=activation, kind="activate", choice=choice))
    update_step = {}
    for r in range(1, u + 1):
        update_step[r] = activation + _EVENT_SPACING * r
        actions.append(
            Action(step=update_step[r], kind="update", oracle=0, value=r)
        )
    trigger_rounds = [update_step[5 * j] for j in range(1, u // 5 + 1)]
    if u % 5:
        trigger_rounds.append(update_step[u] + _EVENT_SPACING)
    for step in trigger_rounds:
        for choice in range(c):
            actions.append(Action(step=step, kind="trigger", choice=choice))
    actions.sort(key=lambda a: (a.step, 0 if a.kind == "update" else 1))
    return Scenario(
        scenario_id=f"cost-{variant.id}-c{c}-u{u}",
        variant=variant,
        semantics=_semantics_for(variant),
        oracles=(OracleDecl("x"),),
        choices=choices,
        timeline=tuple(actions),
        seed=0,
    )


def run_cost_experiment(
    cs: Sequence[int],
    us: Sequence[int],
    variants: Sequence[OracleVariant],
    schedule: GasSchedule | None = None,
) -> list[ExperimentReport]:
    reports = []
    for variant in variants:
        for c in cs:
            for u in us:
                reports.append(run(gen_cost(c, u, variant), schedule))
    return reports


@dataclass
class HeatmapRow:
    variant: str
    c: int
    u: int
    normalized: float


def heatmap_rows(reports: Sequence[ExperimentReport]) -> list[HeatmapRow]:
    """Global min-max normalization of per-consumer operating cost."""
    costs = [report.gas_per_consumer for report in reports]
    lo, hi = min(costs), max(costs)
    span = hi - lo
    rows = []
    for report in reports:
        value = 0.0 if span == 0 else (report.gas_per_consumer - lo) / span
        rows.append(
            HeatmapRow(
                variant=report.variant.id,
                c=report.consumers,
                u=report.updates,
                normalized=value,
            )
        )
    return rows


# --- randomized equivalence scenarios -------------------------------------------


def gen_random_scenarios(
    count: int, seed: int, max_events: int = 6, max_steps: int = 50
) -> list[Scenario]:
    """Unconstrained random scenarios for the equivalence suite.

    Event kinds, timer horizons, condition thresholds, update schedules and
    trigger placement are all randomized; conditions start unsatisfied and
    every run ends with a trigger after the last possible occurrence. The
    returned scenarios carry a transaction-driven variant and can be
    re-targeted with ``Scenario.with_variant``.
    """
    rng = random.Random(seed)
    base_variant = OracleVariant(Architecture.ONCHAIN_HISTORY, False)
    scenarios = []
    for index in range(count):
        k = rng.randint(1, max_events)
        activation = 2
        slots = list(
            range(activation + _EVENT_SPACING, max_steps - 1, _EVENT_SPACING)
        )
        final = slots[-1]
        open_slots = slots[:-1]
        rng.shuffle(open_slots)
        events: list[EventSpec] = []
        bindings: dict[int, int] = {}
        oracles: list[OracleDecl] = []
        actions: list[Action] = [Action(step=activation, kind="activate", choice=0)]
        for eid in range(k):
            kind = rng.choice(
                ("message", "absolute-timer", "relative-timer", "conditional")
            )
            if kind == "message":
                events.append(EventSpec(eid, Message()))
                if open_slots and rng.random() < 0.8:
                    actions.append(
                        Action(
                            step=open_slots.pop(), kind="message", choice=0, event=eid
                        )
                    )
            elif kind == "absolute-timer":
                events.append(
                    EventSpec(eid, AbsoluteTimer(rng.randint(activation, final + 5)))
                )
            elif kind == "relative-timer":
                events.append(
                    EventSpec(eid, RelativeTimer(rng.randint(0, final - activation + 5)))
                )
            else:
                oracle_index = len(oracles)
                variable = f"x{oracle_index}"
                oracles.append(OracleDecl(variable))
                threshold = rng.randint(1, 5)
                events.append(
                    EventSpec(
                        eid,
                        Conditional(exprlang.parse(f"{variable} >= {threshold}")),
                    )
                )
                bindings[eid] = oracle_index
                actions.append(
                    Action(step=1, kind="update", oracle=oracle_index, value=0)
                )
                steps = rng.sample(
                    range(activation + 1, final), k=min(rng.randint(0, 3), final - activation - 1)
                )
                for at in sorted(steps):
                    actions.append(
                        Action(
                            step=at,
                            kind="update",
                            oracle=oracle_index,
                            value=rng.randint(0, 7),
                        )
                    )
        for _ in range(rng.randint(0, 2)):
            if open_slots:
                actions.append(Action(step=open_slots.pop(), kind="trigger", choice=0))
        actions.append(Action(step=final, kind="trigger", choice=0))
        actions.sort(key=lambda a: (a.step, 0 if a.kind == "update" else 1))
        scenarios.append(
            Scenario(
                scenario_id=f"rand-{index:04d}",
                variant=base_variant,
                semantics=SemanticsKind.TRANSACTION_DRIVEN,
                oracles=tuple(oracles),
                choices=(ChoiceDecl(tuple(events), bindings),),
                timeline=tuple(actions),
                seed=seed,
            )
        )
    return scenarios


# --- CSV and receipt serialization ------------------------------------------------


@dataclass
class ReportRow:
    scenario_id: str
    variant: str
    semantics: str
    c: int
    u: int
    winner: int | None
    truth: int | None
    correct: bool
    gas_deploy: int
    gas_total: int
    gas_per_consumer: float


def report_rows(reports: Iterable[ExperimentReport]) -> list[ReportRow]:
    return [
        ReportRow(
            scenario_id=r.scenario_id,
            variant=r.variant.id,
            semantics=r.semantics.value,
            c=r.consumers,
            u=r.updates,
            winner=r.winner,
            truth=r.truth,
            correct=r.correct,
            gas_deploy=r.gas_deploy,
            gas_total=r.gas_total,
            gas_per_consumer=r.gas_per_consumer,
        )
        for r in reports
    ]


_REPORT_FIELDS = (
    "scenario_id",
    "variant",
    "semantics",
    "c",
    "u",
    "winner",
    "truth",
    "correct",
    "gas_deploy",
    "gas_total",
    "gas_per_consumer",
)


def _event_str(value: int | None) -> str:
    return "nil" if value is None else str(value)


def _event_parse(text: str) -> int | None:
    return None if text == "nil" else int(text)


def write_report_csv(path: str | Path, rows: Iterable[ReportRow]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_REPORT_FIELDS)
        for row in rows:
            writer.writerow(
                [
                    row.scenario_id,
                    row.variant,
                    row.semantics,
                    row.c,
                    row.u,
                    _event_str(row.winner),
                    _event_str(row.truth),
                    str(row.correct).lower(),
                    row.gas_deploy,
                    row.gas_total,
                    repr(row.gas_per_consumer),
                ]
            )


def read_report_csv(path: str | Path) -> list[ReportRow]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        return [
            ReportRow(
                scenario_id=row["scenario_id"],
                variant=row["variant"],
                semantics=row["semantics"],
                c=int(row["c"]),
                u=int(row["u"]),
                winner=_event_parse(row["winner"]),
                truth=_event_parse(row["truth"]),
                correct=row["correct"] == "true",
                gas_deploy=int(row["gas_deploy"]),
                gas_total=int(row["gas_total"]),
                gas_per_consumer=float(row["gas_per_consumer"]),
            )
            for row in reader
        ]


def write_correctness_csv(path: str | Path, rows: Iterable[CorrectnessRow]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "semantics",
                "architecture",
                "regular_correct",
                "regular_total",
                "regular_pct",
                "conditional_correct",
                "conditional_total",
                "conditional_pct",
            ]
        )
        for row in rows:
            writer.writerow(
                [
                    row.semantics,
                    row.architecture,
                    row.regular_correct,
                    row.regular_total,
                    f"{row.regular_pct:.1f}" if row.regular_total else "",
                    row.conditional_correct,
                    row.conditional_total,
                    f"{row.conditional_pct:.1f}" if row.conditional_total else "",
                ]
            )


def read_correctness_csv(path: str | Path) -> list[CorrectnessRow]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        return [
            CorrectnessRow(
                semantics=row["semantics"],
                architecture=row["architecture"],
                regular_correct=int(row["regular_correct"]),
                regular_total=int(row["regular_total"]),
                conditional_correct=int(row["conditional_correct"]),
                conditional_total=int(row["conditional_total"]),
            )
            for row in reader
        ]


def write_heatmap_csv(path: str | Path, rows: Iterable[HeatmapRow]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["variant", "c", "u", "normalized"])
        for row in rows:
            writer.writerow([row.variant, row.c, row.u, repr(row.normalized)])


def read_heatmap_csv(path: str | Path) -> list[HeatmapRow]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        return [
            HeatmapRow(
                variant=row["variant"],
                c=int(row["c"]),
                u=int(row["u"]),
                normalized=float(row["normalized"]),
            )
            for row in reader
        ]


def write_receipts_log(path: str | Path, reports: Iterable[ExperimentReport]) -> None:
    """Line-delimited JSON, one record per receipt."""
    with open(path, "w") as handle:
        for report in reports:
            for receipt in report.receipts:
                handle.write(json.dumps(receipt_record(receipt)) + "\n")

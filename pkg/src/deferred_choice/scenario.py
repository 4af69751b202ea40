"""Scenario definition and deterministic replay.

A scenario fixes the oracle variant, the execution semantics, the deferred
choices with their event sets and oracle bindings, and a timeline of
actions: external-variable updates, activations, triggers, and messages.
Replaying a scenario drives a fresh chain plus providers step by step and
then reports, per choice, the on-chain winner next to the ground-truth
winner computed by the continual reference executor over the environment
trace induced from the timeline (timestamps from step indices, valuations
piecewise-constant between updates).
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any

from . import expr as exprlang
from .choice import (
    DeferredChoiceContract,
    SemanticsKind,
    encode_activate,
    encode_trigger,
    valid_combination,
)
from .ledger import Chain, GasSchedule, Receipt, Transaction
from .oracles import OracleProvider, OracleVariant, make_oracle_contract
from .semantics import (
    AbsoluteTimer,
    Conditional,
    EnvironmentState,
    EnvironmentTrace,
    EventSpec,
    Message,
    RelativeTimer,
    check_events,
    run_continual,
)

SIM_ACCOUNT = "sim"
SETTLE_STEPS = 2  # extra empty blocks so trailing callbacks get mined


class ScenarioError(ValueError):
    """Scenario failed validation or deserialization."""


@dataclass(frozen=True)
class OracleDecl:
    variable: str


@dataclass(frozen=True)
class ChoiceDecl:
    events: tuple[EventSpec, ...]
    oracle_for_event: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Action:
    step: int
    kind: str  # update | activate | trigger | message
    oracle: int | None = None
    value: int | None = None
    choice: int | None = None
    preferred: int | None = None
    event: int | None = None


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    variant: OracleVariant
    semantics: SemanticsKind
    oracles: tuple[OracleDecl, ...]
    choices: tuple[ChoiceDecl, ...]
    timeline: tuple[Action, ...]
    seed: int = 0

    def validate(self) -> None:
        if not valid_combination(self.variant, self.semantics):
            raise ScenarioError(
                f"{self.variant.id} cannot run under {self.semantics.value} semantics"
            )
        for decl in self.choices:
            check_events(decl.events)
            for event in decl.events:
                if isinstance(event.kind, Conditional):
                    if event.id not in decl.oracle_for_event:
                        raise ScenarioError(
                            f"conditional event {event.id} lacks an oracle binding"
                        )
                    index = decl.oracle_for_event[event.id]
                    if not 0 <= index < len(self.oracles):
                        raise ScenarioError(f"oracle index {index} out of range")
                    referenced = exprlang.variables(event.kind.condition)
                    provided = {self.oracles[index].variable}
                    if referenced != provided:
                        raise ScenarioError(
                            f"event {event.id} references {sorted(referenced)} but the "
                            f"bound oracle provides {sorted(provided)}"
                        )
        last_step = 0
        update_seen: dict[int, int] = {}
        choice_tx_seen: set[tuple[int, int]] = set()
        activated: set[int] = set()
        for action in self.timeline:
            if action.step < 1:
                raise ScenarioError("timeline steps start at 1")
            if action.step < last_step:
                raise ScenarioError("timeline steps must be non-decreasing")
            last_step = action.step
            if action.kind == "update":
                if action.oracle is None or action.value is None:
                    raise ScenarioError("update action needs oracle and value")
                if not 0 <= action.oracle < len(self.oracles):
                    raise ScenarioError(f"unknown oracle {action.oracle}")
                if update_seen.get(action.oracle) == action.step:
                    raise ScenarioError(
                        f"oracle {action.oracle} updated twice at step {action.step}"
                    )
                update_seen[action.oracle] = action.step
            elif action.kind in ("activate", "trigger", "message"):
                if action.choice is None or not 0 <= action.choice < len(self.choices):
                    raise ScenarioError(f"unknown choice {action.choice}")
                # one transaction per choice per block keeps tie-breaking
                # well-defined (the block's preferred event is unambiguous)
                key = (action.choice, action.step)
                if key in choice_tx_seen:
                    raise ScenarioError(
                        f"choice {action.choice} has two transactions at step {action.step}"
                    )
                choice_tx_seen.add(key)
                events = self.choices[action.choice].events
                if action.kind == "activate":
                    if action.choice in activated:
                        raise ScenarioError(f"choice {action.choice} activated twice")
                    activated.add(action.choice)
                if action.kind == "message":
                    if action.event is None or action.event >= len(events):
                        raise ScenarioError("message action needs a valid event id")
                    if not isinstance(events[action.event].kind, Message):
                        raise ScenarioError(
                            f"event {action.event} is not a message event"
                        )
                if action.preferred is not None and action.preferred >= len(events):
                    raise ScenarioError(f"unknown preferred event {action.preferred}")
            else:
                raise ScenarioError(f"unknown action kind {action.kind!r}")
        # conditional oracles must be defined before the binding choice activates
        for index, decl in enumerate(self.choices):
            activation = next(
                (a.step for a in self.timeline
                 if a.kind == "activate" and a.choice == index),
                None,
            )
            if activation is None:
                continue
            for event in decl.events:
                if isinstance(event.kind, Conditional):
                    oracle = decl.oracle_for_event[event.id]
                    first = min(
                        (a.step for a in self.timeline
                         if a.kind == "update" and a.oracle == oracle),
                        default=None,
                    )
                    if first is None or first > activation:
                        raise ScenarioError(
                            f"oracle {oracle} has no update at or before activation"
                        )

    def with_variant(self, variant: OracleVariant) -> "Scenario":
        semantics = (
            SemanticsKind.CONTINUAL if variant.baseline
            else SemanticsKind.TRANSACTION_DRIVEN
        )
        return replace(self, variant=variant, semantics=semantics)

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(self._to_obj(), indent=2)

    def _to_obj(self) -> dict[str, Any]:
        def event_obj(event: EventSpec, decl: ChoiceDecl) -> dict[str, Any]:
            kind = event.kind
            if isinstance(kind, Message):
                return {"kind": "message"}
            if isinstance(kind, AbsoluteTimer):
                return {"kind": "absolute-timer", "deadline": kind.deadline}
            if isinstance(kind, RelativeTimer):
                return {"kind": "relative-timer", "delta": kind.delta}
            return {
                "kind": "conditional",
                "expr": exprlang.render(kind.condition),
                "oracle": decl.oracle_for_event[event.id],
            }

        def action_obj(action: Action) -> dict[str, Any]:
            obj: dict[str, Any] = {"step": action.step, "action": action.kind}
            for name in ("oracle", "value", "choice", "preferred", "event"):
                value = getattr(action, name)
                if value is not None:
                    obj[name] = value
            return obj

        return {
            "id": self.scenario_id,
            "variant": self.variant.id,
            "semantics": self.semantics.value,
            "seed": self.seed,
            "oracles": [{"variable": o.variable} for o in self.oracles],
            "choices": [
                {"events": [event_obj(e, decl) for e in decl.events]}
                for decl in self.choices
            ],
            "timeline": [action_obj(a) for a in self.timeline],
        }

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as error:
            raise ScenarioError(f"not valid JSON: {error}") from None
        return cls.from_obj(obj)

    @classmethod
    def from_obj(cls, obj: dict[str, Any]) -> "Scenario":
        try:
            variant = OracleVariant.parse(obj["variant"])
            semantics = SemanticsKind(obj["semantics"])
            oracles = tuple(OracleDecl(o["variable"]) for o in obj.get("oracles", []))
            choices = []
            for choice_obj in obj.get("choices", []):
                events = []
                bindings: dict[int, int] = {}
                for eid, event_obj in enumerate(choice_obj["events"]):
                    kind_name = event_obj["kind"]
                    if kind_name == "message":
                        kind: Any = Message()
                    elif kind_name == "absolute-timer":
                        kind = AbsoluteTimer(int(event_obj["deadline"]))
                    elif kind_name == "relative-timer":
                        kind = RelativeTimer(int(event_obj["delta"]))
                    elif kind_name == "conditional":
                        kind = Conditional(exprlang.parse(event_obj["expr"]))
                        bindings[eid] = int(event_obj["oracle"])
                    else:
                        raise ScenarioError(f"unknown event kind {kind_name!r}")
                    events.append(EventSpec(eid, kind))
                choices.append(ChoiceDecl(tuple(events), bindings))
            timeline = tuple(
                Action(
                    step=int(a["step"]),
                    kind=a["action"],
                    oracle=a.get("oracle"),
                    value=a.get("value"),
                    choice=a.get("choice"),
                    preferred=a.get("preferred"),
                    event=a.get("event"),
                )
                for a in obj.get("timeline", [])
            )
            scenario = cls(
                scenario_id=str(obj.get("id", "scenario")),
                variant=variant,
                semantics=semantics,
                oracles=oracles,
                choices=tuple(choices),
                timeline=timeline,
                seed=int(obj.get("seed", 0)),
            )
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError, exprlang.ExprError) as error:
            raise ScenarioError(f"malformed scenario: {error}") from None
        scenario.validate()
        return scenario


# --- ground truth -----------------------------------------------------------


def induced_trace(scenario: Scenario, start: int, end: int) -> EnvironmentTrace:
    """Environment trace from the timeline: valuations change at update steps."""
    updates: dict[int, list[tuple[int, int]]] = {}
    for action in scenario.timeline:
        if action.kind == "update":
            updates.setdefault(action.step, []).append((action.oracle, action.value))
    values = {decl.variable: 0 for decl in scenario.oracles}
    states = []
    for step in range(1, end + 1):
        for oracle_index, value in updates.get(step, ()):
            values[scenario.oracles[oracle_index].variable] = value
        if step >= start:
            states.append(EnvironmentState(step, dict(values)))
    return EnvironmentTrace(states)


def ground_truth_winner(scenario: Scenario, choice_index: int) -> tuple[int | None, int | None]:
    """(winner, observed timestamp) per the continual reference executor."""
    activation = next(
        (a for a in scenario.timeline if a.kind == "activate" and a.choice == choice_index),
        None,
    )
    if activation is None:
        return None, None
    end = max(a.step for a in scenario.timeline)
    trace = induced_trace(scenario, activation.step, end)
    messages = [
        (a.event, a.step)
        for a in scenario.timeline
        if a.kind == "message" and a.choice == choice_index
    ]
    preferred_by_time = {at: event for event, at in messages}
    final = run_continual(
        scenario.choices[choice_index].events,
        trace,
        messages,
        activation_preferred=activation.preferred,
        preferred_by_time=preferred_by_time,
    )
    return final.winner, final.observed.t


# --- replay -----------------------------------------------------------------


@dataclass
class ChoiceOutcome:
    choice: int
    winner: int | None
    truth: int | None
    correct: bool
    activation_ts: int | None
    observed_ts: int | None
    winner_detection_ts: int | None
    finalized_at: int | None


@dataclass
class ExperimentReport:
    scenario_id: str
    variant: OracleVariant
    semantics: SemanticsKind
    consumers: int
    updates: int
    outcomes: list[ChoiceOutcome]
    gas_deploy: int
    gas_total: int
    receipts: list[Receipt]

    @property
    def gas_operating(self) -> int:
        return self.gas_total - self.gas_deploy

    @property
    def gas_per_consumer(self) -> float:
        return self.gas_operating / max(self.consumers, 1)

    @property
    def winner(self) -> int | None:
        return self.outcomes[0].winner if self.outcomes else None

    @property
    def truth(self) -> int | None:
        return self.outcomes[0].truth if self.outcomes else None

    @property
    def correct(self) -> bool:
        return all(outcome.correct for outcome in self.outcomes)


def run(scenario: Scenario, schedule: GasSchedule | None = None) -> ExperimentReport:
    """Replay the scenario on a fresh chain; deterministic for a given input."""
    scenario.validate()
    chain = Chain(schedule or GasSchedule())
    oracle_contracts = []
    for decl in scenario.oracles:
        contract = make_oracle_contract(scenario.variant, decl.variable)
        chain.deploy(contract)
        oracle_contracts.append(contract)
    providers = [OracleProvider(chain, contract) for contract in oracle_contracts]
    choice_contracts = []
    for decl in scenario.choices:
        bindings = {
            eid: oracle_contracts[index]
            for eid, index in decl.oracle_for_event.items()
        }
        contract = DeferredChoiceContract(
            decl.events, scenario.variant, scenario.semantics, bindings
        )
        chain.deploy(contract)
        choice_contracts.append(contract)

    by_step: dict[int, list[Action]] = {}
    for action in scenario.timeline:
        by_step.setdefault(action.step, []).append(action)
    for actions in by_step.values():
        # within a block, data changes precede choice transactions; the
        # induced ground-truth trace assumes the same order
        actions.sort(key=lambda a: 0 if a.kind == "update" else 1)
    last_step = max((a.step for a in scenario.timeline), default=0)

    for step in range(1, last_step + SETTLE_STEPS + 1):
        for action in by_step.get(step, ()):
            if action.kind == "update":
                providers[action.oracle].on_external_update(action.value, step)
            else:
                target = choice_contracts[action.choice]
                if action.kind == "activate":
                    payload = encode_activate(action.preferred)
                    function = "activate"
                elif action.kind == "trigger":
                    payload = encode_trigger(action.preferred, None)
                    function = "try_trigger"
                else:  # message: the transaction names its own event as preferred
                    preferred = (
                        action.preferred if action.preferred is not None else action.event
                    )
                    payload = encode_trigger(preferred, action.event)
                    function = "try_trigger"
                chain.submit(
                    Transaction(SIM_ACCOUNT, target.address, function, payload, chain.height)
                )
        receipts = chain.step()
        for provider in providers:
            provider.after_block(receipts, chain.height)

    outcomes = []
    for index, contract in enumerate(choice_contracts):
        truth, _ = ground_truth_winner(scenario, index)
        outcomes.append(
            ChoiceOutcome(
                choice=index,
                winner=contract.winner,
                truth=truth,
                correct=contract.winner == truth,
                activation_ts=contract.activation_ts,
                observed_ts=contract.observed_ts,
                winner_detection_ts=contract.winner_detection_ts,
                finalized_at=contract.finalized_at,
            )
        )
    # updates before any activation initialize variables; they are setup,
    # not experiment load
    first_activation = min(
        (a.step for a in scenario.timeline if a.kind == "activate"), default=0
    )
    return ExperimentReport(
        scenario_id=scenario.scenario_id,
        variant=scenario.variant,
        semantics=scenario.semantics,
        consumers=len(scenario.choices),
        updates=sum(
            1
            for a in scenario.timeline
            if a.kind == "update" and a.step >= first_activation
        ),
        outcomes=outcomes,
        gas_deploy=chain.deploy_gas_total,
        gas_total=chain.deploy_gas_total + sum(r.gas_used for r in chain.receipts),
        receipts=list(chain.receipts),
    )

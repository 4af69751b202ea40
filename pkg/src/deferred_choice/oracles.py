"""Oracle architectures bridging external variables onto the ledger.

Each oracle serves one external variable and comes in two halves: an
on-chain contract and an off-chain provider. Five architectures are
implemented, each in a regular and a conditional variant:

* storage          — current value kept on-chain, synchronous reads
* request-response — value kept off-chain, query event + callback
* onchain-history  — change points appended on-chain, synchronous slices
* offchain-history — change points kept off-chain, slices via callback
* pubsub           — provider pushes every change to subscribers

Regular variants hand values (or value histories) to the consumer, which
evaluates its condition locally. Conditional variants accept a rendered
condition expression and answer with a boolean, an earliest-satisfied
timestamp, or a push signal at the first time the condition holds.

Histories record change points only: an update that repeats the current
value adds no entry and triggers no push. All provider reactions to
on-chain events (queries, subscriptions) are mined exactly one block
later; transactions the provider originates itself when the external
variable changes (storage/history writes, change pushes) are mined in the
block of the change timestamp.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from . import expr as exprlang
from . import wordcodec
from .ledger import Chain, Contract, ExecutionContext, Revert, Transaction
from .semantics import NEVER


class OracleError(Exception):
    """Misuse of an oracle interface (e.g. synchronous query on an async one)."""


class Architecture(str, Enum):
    STORAGE = "storage"
    REQUEST_RESPONSE = "request-response"
    ONCHAIN_HISTORY = "onchain-history"
    OFFCHAIN_HISTORY = "offchain-history"
    PUBSUB = "pubsub"


@dataclass(frozen=True)
class OracleVariant:
    architecture: Architecture
    conditional: bool = False

    @property
    def id(self) -> str:
        return self.architecture.value + ("-cond" if self.conditional else "")

    @property
    def synchronous(self) -> bool:
        return self.architecture in (Architecture.STORAGE, Architecture.ONCHAIN_HISTORY)

    @property
    def baseline(self) -> bool:
        """True for the architectures that cannot rank detections in time."""
        return self.architecture in (Architecture.STORAGE, Architecture.REQUEST_RESPONSE)

    @classmethod
    def parse(cls, text: str) -> "OracleVariant":
        name = text.strip()
        conditional = name.endswith("-cond")
        if conditional:
            name = name[: -len("-cond")]
        try:
            return cls(Architecture(name), conditional)
        except ValueError:
            raise OracleError(f"unknown oracle variant {text!r}") from None


ALL_VARIANTS: tuple[OracleVariant, ...] = tuple(
    OracleVariant(arch, conditional)
    for arch in Architecture
    for conditional in (False, True)
)


@dataclass(frozen=True)
class HistoryEntry:
    at: int
    value: int


@dataclass(frozen=True)
class OracleQuery:
    consumer: int
    corr: int
    params: bytes


@dataclass
class Subscription:
    subscriber: int
    condition: exprlang.Expr | None
    active: bool = True
    satisfied: bool = False
    signaled: bool = False


def history_slice(entries: list[HistoryEntry], from_ts: int) -> list[HistoryEntry]:
    """All change points at or after ``from_ts``."""
    return [entry for entry in entries if entry.at >= from_ts]


def earliest_satisfied(
    entries: list[HistoryEntry],
    from_ts: int,
    condition: exprlang.Expr,
    variable: str,
) -> tuple[int, int]:
    """Earliest timestamp >= from_ts at which the condition holds, or NEVER.

    Walks the change points of the step-function variable, including the
    one in force when the window opens. Returns ``(timestamp, visited)``
    where ``visited`` counts the entries examined.
    """
    visited = 0
    for i, entry in enumerate(entries):
        next_at = entries[i + 1].at if i + 1 < len(entries) else None
        if next_at is not None and next_at <= from_ts:
            continue  # interval entirely before the window
        visited += 1
        if exprlang.evaluate(condition, {variable: entry.value}):
            return max(entry.at, from_ts), visited
    return NEVER, visited


def slice_first_satisfied(
    pairs: list[tuple[int, int]], condition: exprlang.Expr, variable: str
) -> int | None:
    """First change point in a slice whose value satisfies the condition."""
    for at, value in pairs:
        if exprlang.evaluate(condition, {variable: value}):
            return at
    return None


# --- on-chain halves --------------------------------------------------------


class SyncOracle(Contract):
    """Storage and on-chain-history contracts: data lives on-chain and
    queries answer within the calling transaction.

    Query parameters, the returned bytes and the storage entries examined
    are all charged to the calling transaction as an execution surcharge.
    """

    def __init__(self, variant: OracleVariant, variable: str):
        super().__init__()
        if not variant.synchronous:
            raise OracleError(f"{variant.id} is not a synchronous oracle")
        self.variant = variant
        self.variable = variable
        self.kind = f"{variant.id}-oracle"
        self.entries: list[HistoryEntry] = []
        self.current: HistoryEntry | None = None

    def handle(self, ctx: ExecutionContext, function: str, payload: bytes) -> None:
        if function == "set":
            self.set(ctx, payload)
        else:
            raise Revert(f"unknown function {function!r}")

    def set(self, ctx: ExecutionContext, payload: bytes) -> None:
        value = wordcodec.decode_word(payload, 0)
        at = ctx.block_time
        if self.variant.architecture is Architecture.STORAGE:
            self.current = HistoryEntry(at, value)
            ctx.write(self.storage, "value", value)
            return
        if self.current is not None and self.current.value == value:
            return  # change points only
        self.current = HistoryEntry(at, value)
        index = len(self.entries)
        self.entries.append(HistoryEntry(at, value))
        ctx.write(self.storage, f"at:{index}", at)
        ctx.write(self.storage, f"value:{index}", value)

    def query(self, ctx: ExecutionContext, params: bytes) -> bytes:
        ctx.charge_bytes(params)
        if self.variant.architecture is Architecture.STORAGE:
            value = self.current.value if self.current else 0
            scan = wordcodec.encode_word(value)
            if self.variant.conditional:
                condition = exprlang.parse(wordcodec.decode_text(params, 0))
                result = wordcodec.encode_bool(
                    exprlang.evaluate(condition, {self.variable: value})
                )
            else:
                result = wordcodec.encode_word(value)
            ctx.charge_bytes(scan)
            ctx.charge_bytes(result)
            return result
        from_ts = wordcodec.decode_word(params, 0)
        if self.variant.conditional:
            condition = exprlang.parse(wordcodec.decode_text(params, 1))
            found, visited = earliest_satisfied(
                self.entries, from_ts, condition, self.variable
            )
            scan = wordcodec.encode_pairs(
                [(e.at, e.value) for e in self.entries[:visited]]
            )
            result = wordcodec.encode_word(found)
        else:
            window = history_slice(self.entries, from_ts)
            scan = wordcodec.encode_pairs([(e.at, e.value) for e in window])
            result = scan
        ctx.charge_bytes(scan)
        ctx.charge_bytes(result)
        return result


class AsyncOracle(Contract):
    """Request-response, off-chain-history and pub/sub contracts: data lives
    with the provider; the contract only relays queries and subscriptions
    through the log layer. Pub/sub subscriptions are flagged on-chain so
    duplicates revert and deactivation is immediate."""

    def __init__(self, variant: OracleVariant, variable: str):
        super().__init__()
        if variant.synchronous:
            raise OracleError(f"{variant.id} is not an asynchronous oracle")
        self.variant = variant
        self.variable = variable
        self.kind = f"{variant.id}-oracle"

    def query(self, ctx: ExecutionContext, params: bytes) -> bytes:
        raise OracleError("synchronous query on an asynchronous oracle")

    def request(self, ctx: ExecutionContext, consumer: int, corr: int, params: bytes) -> None:
        if self.variant.architecture is Architecture.PUBSUB:
            raise OracleError("pub/sub oracles are driven by subscriptions, not queries")
        ctx.log(self.address, "query", wordcodec.encode_words(corr, consumer) + params)

    def subscribe(self, ctx: ExecutionContext, subscriber: int, params: bytes) -> None:
        if self.variant.architecture is not Architecture.PUBSUB:
            raise OracleError("only pub/sub oracles accept subscriptions")
        key = f"sub:{subscriber}"
        if self.storage.get(key) == 1:
            raise Revert("already subscribed")
        ctx.write(self.storage, key, 1)
        ctx.log(self.address, "subscribe", wordcodec.encode_word(subscriber) + params)

    def unsubscribe(self, ctx: ExecutionContext, subscriber: int) -> None:
        key = f"sub:{subscriber}"
        if self.storage.get(key) != 1:
            raise Revert("not subscribed")
        ctx.write(self.storage, key, 0)
        ctx.log(self.address, "unsubscribe", wordcodec.encode_word(subscriber))

    def is_subscribed(self, subscriber: int) -> bool:
        return self.storage.get(f"sub:{subscriber}") == 1


def make_oracle_contract(variant: OracleVariant, variable: str) -> Contract:
    if variant.synchronous:
        return SyncOracle(variant, variable)
    return AsyncOracle(variant, variable)


# --- off-chain half ---------------------------------------------------------


@dataclass
class _ProviderState:
    history: list[HistoryEntry] = field(default_factory=list)
    current: HistoryEntry | None = None


class OracleProvider:
    """Deterministic off-chain reactor for one oracle contract.

    ``on_external_update`` is driven by the scenario engine when the
    external variable changes; ``after_block`` consumes the freshly mined
    block's logs and schedules responses for the next block.
    """

    def __init__(self, chain: Chain, oracle: Contract):
        self.chain = chain
        self.oracle = oracle
        self.variant: OracleVariant = oracle.variant
        self.variable: str = oracle.variable
        self.account = f"provider-{oracle.address}"
        self.state = _ProviderState()
        self.subscriptions: dict[int, Subscription] = {}

    # -- data updates --------------------------------------------------------

    def on_external_update(self, value: int, at: int) -> None:
        previous = self.state.current
        if previous is not None and at <= previous.at:
            raise OracleError(
                f"non-monotone update: {at} after {previous.at} on {self.variable}"
            )
        changed = previous is None or previous.value != value
        self.state.current = HistoryEntry(at, value)
        if changed:
            self.state.history.append(HistoryEntry(at, value))
        arch = self.variant.architecture
        if arch is Architecture.STORAGE:
            self._submit_set(value)
        elif arch is Architecture.ONCHAIN_HISTORY:
            if changed:
                self._submit_set(value)
        elif arch is Architecture.PUBSUB:
            if changed:
                self._push_change(value, at)

    def _submit_set(self, value: int) -> None:
        self.chain.submit(
            Transaction(
                self.account,
                self.oracle.address,
                "set",
                wordcodec.encode_word(value),
                self.chain.height,
            )
        )

    def _push_change(self, value: int, at: int) -> None:
        for subscriber, sub in self.subscriptions.items():
            if not self.oracle.is_subscribed(subscriber):
                continue
            if self.variant.conditional:
                was = sub.satisfied
                sub.satisfied = exprlang.evaluate(sub.condition, {self.variable: value})
                if sub.satisfied and not was and not sub.signaled:
                    sub.signaled = True
                    self.chain.submit(self._push_tx(subscriber, at, None))
            else:
                self.chain.submit(self._push_tx(subscriber, at, value))

    def _push_tx(self, subscriber: int, at: int, value: int | None) -> Transaction:
        words = [self.oracle.address, at]
        if value is not None:
            words.append(value)
        return Transaction(
            self.account,
            subscriber,
            "push",
            wordcodec.encode_words(*words),
            self.chain.height,
        )

    # -- log reactions ---------------------------------------------------------

    def after_block(self, receipts, block_ts: int) -> None:
        for receipt in receipts:
            if receipt.status != "ok":
                continue
            for log in receipt.logs:
                if log.source != self.oracle.address:
                    continue
                if log.topic == "query":
                    corr = wordcodec.decode_word(log.payload, 0)
                    consumer = wordcodec.decode_word(log.payload, 1)
                    params = log.payload[2 * wordcodec.WORD_SIZE :]
                    self.chain.submit_deferred(
                        self.respond(OracleQuery(consumer, corr, params))
                    )
                elif log.topic == "subscribe":
                    subscriber = wordcodec.decode_word(log.payload, 0)
                    params = log.payload[wordcodec.WORD_SIZE :]
                    self._register_subscription(subscriber, params, block_ts)
                elif log.topic == "unsubscribe":
                    subscriber = wordcodec.decode_word(log.payload, 0)
                    if subscriber in self.subscriptions:
                        self.subscriptions[subscriber].active = False

    def _register_subscription(self, subscriber: int, params: bytes, block_ts: int) -> None:
        if self.state.current is None:
            raise OracleError(
                f"subscription before any update of {self.variable!r}"
            )
        condition = None
        if self.variant.conditional:
            condition = exprlang.parse(wordcodec.decode_text(params, 0))
        sub = Subscription(subscriber, condition)
        self.subscriptions[subscriber] = sub
        # push the current knowledge immediately so the subscriber has no gap
        if self.variant.conditional:
            sub.satisfied = exprlang.evaluate(
                condition, {self.variable: self.state.current.value}
            )
            if sub.satisfied:
                sub.signaled = True
                self.chain.submit_deferred(self._push_tx(subscriber, block_ts, None))
        else:
            self.chain.submit_deferred(
                self._push_tx(subscriber, block_ts, self.state.current.value)
            )

    # -- query answers -----------------------------------------------------------

    def respond(self, query: OracleQuery) -> Transaction:
        """Build the callback transaction answering an asynchronous query."""
        arch = self.variant.architecture
        if arch is Architecture.REQUEST_RESPONSE:
            current = self.state.current.value if self.state.current else 0
            if self.variant.conditional:
                condition = exprlang.parse(wordcodec.decode_text(query.params, 0))
                result = wordcodec.encode_bool(
                    exprlang.evaluate(condition, {self.variable: current})
                )
            else:
                result = wordcodec.encode_word(current)
        elif arch is Architecture.OFFCHAIN_HISTORY:
            from_ts = wordcodec.decode_word(query.params, 0)
            if self.variant.conditional:
                condition = exprlang.parse(wordcodec.decode_text(query.params, 1))
                found, _ = earliest_satisfied(
                    self.state.history, from_ts, condition, self.variable
                )
                result = wordcodec.encode_word(found)
            else:
                window = history_slice(self.state.history, from_ts)
                result = wordcodec.encode_pairs([(e.at, e.value) for e in window])
        else:
            raise OracleError(f"{self.variant.id} does not answer queries")
        return Transaction(
            self.account,
            query.consumer,
            "oracle_callback",
            wordcodec.encode_word(query.corr) + result,
            self.chain.height,
        )

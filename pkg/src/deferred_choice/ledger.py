"""Deterministic transaction-driven runtime standing in for a blockchain.

One block is mined per simulation step and the block timestamp equals the
block height, which realizes the discrete time domain of the semantics
layer directly on-chain. Gas covers the transaction base cost, calldata
bytes, storage writes, log emission and any execution surcharge a contract
adds (synchronous oracle reads are metered that way). There is no virtual
machine: contracts are Python objects dispatching on a function selector.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

from . import wordcodec


class LedgerError(Exception):
    """Base class for ledger failures."""


class UnknownContractError(LedgerError):
    """A transaction was submitted to an address with no contract."""


class Revert(Exception):
    """Raised by contract code to abort the current transaction."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class Transaction:
    sender: str
    to: int
    function: str
    payload: bytes
    submitted_at: int

    def __post_init__(self) -> None:
        if not wordcodec.is_word_aligned(self.payload):
            raise LedgerError(
                f"payload length {len(self.payload)} is not a multiple of 32"
            )


@dataclass(frozen=True)
class LogEntry:
    source: int
    topic: str
    payload: bytes

    def __post_init__(self) -> None:
        if not wordcodec.is_word_aligned(self.payload):
            raise LedgerError("log payload is not word aligned")


@dataclass(frozen=True)
class Receipt:
    tx: Transaction
    mined_at: int
    gas_used: int
    logs: tuple[LogEntry, ...]
    status: str  # "ok" | "reverted"
    revert_reason: str | None = None


def _default_deploy_costs() -> dict[str, int]:
    # Invented constants; relative magnitudes reflect contract complexity
    # (history slicing and on-chain condition evaluation cost more code).
    oracle = {
        "storage": 280_000,
        "storage-cond": 410_000,
        "request-response": 280_000,
        "request-response-cond": 280_000,
        "onchain-history": 470_000,
        "onchain-history-cond": 550_000,
        "offchain-history": 280_000,
        "offchain-history-cond": 280_000,
        "pubsub": 280_000,
        "pubsub-cond": 280_000,
    }
    choice = {
        "storage": 1_430_000,
        "storage-cond": 1_410_000,
        "request-response": 1_500_000,
        "request-response-cond": 1_480_000,
        "onchain-history": 1_520_000,
        "onchain-history-cond": 1_390_000,
        "offchain-history": 1_590_000,
        "offchain-history-cond": 1_450_000,
        "pubsub": 1_580_000,
        "pubsub-cond": 1_490_000,
    }
    costs = {f"{name}-oracle": gas for name, gas in oracle.items()}
    costs.update({f"{name}-choice": gas for name, gas in choice.items()})
    return costs


@dataclass
class GasSchedule:
    """Cost constants; configuration, not contract."""

    tx_base: int = 21_000
    per_zero_byte: int = 4
    per_nonzero_byte: int = 16
    storage_write_new: int = 20_000
    storage_write_update: int = 5_000
    log_base: int = 375
    log_per_byte: int = 8
    deploy_per_contract: dict[str, int] = field(default_factory=_default_deploy_costs)

    def byte_cost(self, data: bytes) -> int:
        zeros = data.count(0)
        return zeros * self.per_zero_byte + (len(data) - zeros) * self.per_nonzero_byte

    def log_cost(self, log: LogEntry) -> int:
        return self.log_base + self.log_per_byte * len(log.payload)

    def deploy_cost(self, kind: str) -> int:
        try:
            return self.deploy_per_contract[kind]
        except KeyError:
            raise LedgerError(f"no deployment cost configured for kind {kind!r}") from None

    def with_overrides(self, overrides: Mapping[str, object]) -> "GasSchedule":
        scalars = {
            key: int(value)  # type: ignore[arg-type]
            for key, value in overrides.items()
            if key != "deploy_per_contract"
        }
        schedule = replace(self, **scalars)
        deploys = overrides.get("deploy_per_contract")
        if deploys:
            merged = dict(schedule.deploy_per_contract)
            merged.update({k: int(v) for k, v in deploys.items()})  # type: ignore[union-attr]
            schedule = replace(schedule, deploy_per_contract=merged)
        return schedule


def gas_cost(
    schedule: GasSchedule,
    tx: Transaction,
    storage_writes_new: int,
    storage_writes_update: int,
    logs: Sequence[LogEntry],
) -> int:
    """Base + calldata bytes + storage terms + log terms."""
    total = schedule.tx_base + schedule.byte_cost(tx.payload)
    total += storage_writes_new * schedule.storage_write_new
    total += storage_writes_update * schedule.storage_write_update
    total += sum(schedule.log_cost(log) for log in logs)
    return total


class ContractStorage:
    """Key-value storage; writes are metered through the execution context."""

    def __init__(self) -> None:
        self._slots: dict[str, int] = {}

    def get(self, key: str, default: int | None = None) -> int | None:
        return self._slots.get(key, default)

    def __contains__(self, key: str) -> bool:
        return key in self._slots

    def _set(self, key: str, value: int) -> bool:
        """Returns True when the slot is written for the first time."""
        fresh = key not in self._slots
        self._slots[key] = value
        return fresh


class ExecutionContext:
    """Per-transaction accounting: block time, writes, logs, surcharges."""

    def __init__(self, block_time: int, schedule: GasSchedule):
        self.block_time = block_time
        self.schedule = schedule
        self.writes_new = 0
        self.writes_update = 0
        self.logs: list[LogEntry] = []
        self.surcharge = 0

    def write(self, storage: ContractStorage, key: str, value: int) -> None:
        if storage._set(key, value):
            self.writes_new += 1
        else:
            self.writes_update += 1

    def log(self, source: int, topic: str, payload: bytes = b"") -> None:
        self.logs.append(LogEntry(source, topic, payload))

    def charge_bytes(self, data: bytes) -> None:
        self.surcharge += self.schedule.byte_cost(data)


class Contract:
    """Base for on-chain objects; the chain assigns the address at deploy."""

    kind: str = "contract"

    def __init__(self) -> None:
        self.address: int = 0
        self.storage = ContractStorage()

    def handle(self, ctx: ExecutionContext, function: str, payload: bytes) -> None:
        raise Revert(f"unknown function {function!r}")


class Chain:
    """Single-owner deterministic chain: blocks, receipts, gas attribution."""

    def __init__(self, schedule: GasSchedule | None = None):
        self.schedule = schedule or GasSchedule()
        self.height = 0
        self.contracts: dict[int, Contract] = {}
        self.receipts: list[Receipt] = []
        self.cumulative_gas: dict[int, int] = {}
        self.deploy_gas_total = 0
        self._next_address = 1
        self._pending: list[Transaction] = []
        self._deferred: list[Transaction] = []

    def deploy(self, contract: Contract) -> int:
        """Register a contract and charge its per-kind deployment constant."""
        address = self._next_address
        self._next_address += 1
        contract.address = address
        self.contracts[address] = contract
        cost = self.schedule.deploy_cost(contract.kind)
        self.cumulative_gas[address] = cost
        self.deploy_gas_total += cost
        return address

    def submit(self, tx: Transaction) -> None:
        """Queue for the next mined block; the target must exist."""
        if tx.to not in self.contracts:
            raise UnknownContractError(f"no contract at address {tx.to}")
        self._pending.append(tx)

    def submit_deferred(self, tx: Transaction) -> None:
        """Queue a provider reaction for the next mined block, ahead of fresh
        submissions. Target validity is only checked at execution, so a
        callback to a missing consumer yields a reverted receipt instead of
        an error."""
        self._deferred.append(tx)

    def step(self) -> list[Receipt]:
        """Mine one block: execute deferred reactions, then fresh submissions."""
        self.height += 1
        batch = self._deferred + self._pending
        self._deferred = []
        self._pending = []
        mined: list[Receipt] = []
        for tx in batch:
            receipt = self._execute(tx, self.height)
            mined.append(receipt)
            self.receipts.append(receipt)
            if tx.to in self.contracts:
                self.cumulative_gas[tx.to] = (
                    self.cumulative_gas.get(tx.to, 0) + receipt.gas_used
                )
        return mined

    def _execute(self, tx: Transaction, block_time: int) -> Receipt:
        ctx = ExecutionContext(block_time, self.schedule)
        contract = self.contracts.get(tx.to)
        if contract is None:
            gas = self.schedule.tx_base + self.schedule.byte_cost(tx.payload)
            return Receipt(tx, block_time, gas, (), "reverted", "unknown contract")
        try:
            contract.handle(ctx, tx.function, tx.payload)
        except Revert as revert:
            gas = self.schedule.tx_base + self.schedule.byte_cost(tx.payload)
            return Receipt(tx, block_time, gas, (), "reverted", revert.reason)
        gas = gas_cost(self.schedule, tx, ctx.writes_new, ctx.writes_update, ctx.logs)
        gas += ctx.surcharge
        return Receipt(tx, block_time, gas, tuple(ctx.logs), "ok", None)


def receipt_record(receipt: Receipt) -> dict:
    """JSON-serializable record for the receipt dump (one line per receipt)."""
    return {
        "step": receipt.mined_at,
        "from": receipt.tx.sender,
        "to": receipt.tx.to,
        "function": receipt.tx.function,
        "payload_bytes": receipt.tx.payload.hex(),
        "gas_used": receipt.gas_used,
        "status": receipt.status,
        "logs": [
            {"source": log.source, "topic": log.topic, "payload": log.payload.hex()}
            for log in receipt.logs
        ],
    }

"""Oracle contract + provider behavior, driven through a real chain.

The running fixture mirrors the worked example: variable ``d_w`` is 0 at
step 73, 1 at 74, and 2 at 77.
"""

import pytest

from deferred_choice import wordcodec as wc
from deferred_choice.expr import parse
from deferred_choice.ledger import Chain, Contract, GasSchedule
from deferred_choice.oracles import (
    Architecture,
    AsyncOracle,
    OracleError,
    OracleProvider,
    OracleQuery,
    OracleVariant,
    SyncOracle,
    earliest_satisfied,
    history_slice,
    make_oracle_contract,
    HistoryEntry,
)
from deferred_choice.semantics import NEVER


class Sink(Contract):
    """Records every transaction it receives (a stand-in consumer)."""

    kind = "sink"

    def __init__(self):
        super().__init__()
        self.received = []

    def handle(self, ctx, function, payload):
        self.received.append((ctx.block_time, function, payload))


def make_rig(variant_id):
    schedule = GasSchedule().with_overrides({"deploy_per_contract": {"sink": 1_000}})
    chain = Chain(schedule)
    oracle = make_oracle_contract(OracleVariant.parse(variant_id), "d_w")
    chain.deploy(oracle)
    provider = OracleProvider(chain, oracle)
    sink = Sink()
    chain.deploy(sink)
    return chain, oracle, provider, sink


def mine(chain, provider):
    receipts = chain.step()
    provider.after_block(receipts, chain.height)
    return receipts


def advance_to(chain, provider, step):
    while chain.height < step:
        mine(chain, provider)


def feed_table_updates(chain, provider, through=77):
    """Replays updates 0@73, 1@74, 2@77 (mined at those heights)."""
    for at, value in ((73, 0), (74, 1), (77, 2)):
        if at > through:
            break
        advance_to(chain, provider, at - 1)
        provider.on_external_update(value, at)
        mine(chain, provider)
    advance_to(chain, provider, through)


def ctx_for(chain):
    from deferred_choice.ledger import ExecutionContext

    return ExecutionContext(chain.height, chain.schedule)


# --- provider_update ---------------------------------------------------------


def test_storage_update_then_sync_query():
    chain, oracle, provider, _ = make_rig("storage")
    feed_table_updates(chain, provider, through=74)
    result = oracle.query(ctx_for(chain), b"")
    assert wc.decode_word(result) == 1


def test_storage_set_mined_at_update_step():
    chain, oracle, provider, _ = make_rig("storage")
    advance_to(chain, provider, 72)
    provider.on_external_update(0, 73)
    receipts = mine(chain, provider)
    assert [r.tx.function for r in receipts] == ["set"]
    assert receipts[0].mined_at == 73


def test_storage_repeats_still_sent():
    chain, oracle, provider, _ = make_rig("storage")
    advance_to(chain, provider, 1)
    provider.on_external_update(1, 2)
    mine(chain, provider)
    provider.on_external_update(1, 3)
    receipts = mine(chain, provider)
    assert [r.tx.function for r in receipts] == ["set"]


def test_onchain_history_skips_unchanged_values():
    chain, oracle, provider, _ = make_rig("onchain-history")
    advance_to(chain, provider, 1)
    set_counts = []
    for step, value in ((2, 0), (3, 1), (4, 1), (5, 2)):
        provider.on_external_update(value, step)
        receipts = mine(chain, provider)
        set_counts.append(sum(1 for r in receipts if r.tx.function == "set"))
    assert set_counts == [1, 1, 0, 1]
    assert [(e.at, e.value) for e in oracle.entries] == [(2, 0), (3, 1), (5, 2)]


def test_offchain_history_update_produces_no_transactions():
    chain, oracle, provider, _ = make_rig("offchain-history")
    advance_to(chain, provider, 72)
    provider.on_external_update(0, 73)
    assert mine(chain, provider) == []
    assert provider.state.history == [HistoryEntry(73, 0)]


def test_nonmonotone_update_rejected():
    chain, oracle, provider, _ = make_rig("storage")
    advance_to(chain, provider, 4)
    provider.on_external_update(1, 5)
    with pytest.raises(OracleError):
        provider.on_external_update(2, 5)


def test_pubsub_conditional_signals_only_on_first_transition():
    chain, oracle, provider, sink = make_rig("pubsub-cond")
    advance_to(chain, provider, 72)
    provider.on_external_update(0, 73)
    mine(chain, provider)
    ctx = ctx_for(chain)
    oracle.subscribe(ctx, sink.address, wc.encode_text("d_w >= 2"))
    provider.after_block(
        [type("R", (), {"status": "ok", "logs": ctx.logs})()], chain.height
    )
    mine(chain, provider)  # immediate push window: condition false, no signal
    before = len(sink.received)
    for at, value in ((75, 1), (76, 1)):
        advance_to(chain, provider, at - 1)
        provider.on_external_update(value, at)
        mine(chain, provider)
    assert len(sink.received) == before  # 0,1,1 produced no signal
    provider.on_external_update(2, 77)
    receipts = mine(chain, provider)
    pushes = [r for r in receipts if r.tx.function == "push"]
    assert len(pushes) == 1
    carried = wc.decode_word(pushes[0].tx.payload, 1)
    assert carried == 77
    provider.on_external_update(3, 78)  # still satisfied: no second signal
    assert [r for r in mine(chain, provider) if r.tx.function == "push"] == []


# --- sync_query ----------------------------------------------------------------


def test_onchain_history_slice_from_activation():
    chain, oracle, provider, _ = make_rig("onchain-history")
    feed_table_updates(chain, provider)
    result = oracle.query(ctx_for(chain), wc.encode_word(73))
    assert wc.decode_pairs(result) == [(73, 0), (74, 1), (77, 2)]


def test_onchain_history_conditional_earliest():
    chain, oracle, provider, _ = make_rig("onchain-history-cond")
    feed_table_updates(chain, provider)
    params = wc.encode_word(73) + wc.encode_text("d_w >= 2")
    assert wc.decode_word(oracle.query(ctx_for(chain), params)) == 77


def test_storage_conditional_query():
    chain, oracle, provider, _ = make_rig("storage-cond")
    feed_table_updates(chain, provider, through=74)
    result = oracle.query(ctx_for(chain), wc.encode_text("d_w >= 2"))
    assert wc.decode_bool(result) is False


def test_sync_query_on_async_oracle_rejected():
    chain, oracle, provider, _ = make_rig("request-response")
    with pytest.raises(OracleError):
        oracle.query(ctx_for(chain), b"")


# --- async_query / provider_respond ------------------------------------------------


def test_request_response_callback_carries_current_value():
    chain, oracle, provider, sink = make_rig("request-response")
    feed_table_updates(chain, provider, through=74)
    callback = provider.respond(OracleQuery(sink.address, 7, b""))
    assert callback.function == "oracle_callback"
    assert wc.decode_word(callback.payload, 0) == 7
    assert wc.decode_word(callback.payload, 1) == 1


def test_offchain_history_conditional_response():
    chain, oracle, provider, sink = make_rig("offchain-history-cond")
    feed_table_updates(chain, provider, through=78)
    params = wc.encode_word(73) + wc.encode_text("d_w >= 2")
    callback = provider.respond(OracleQuery(sink.address, 1, params))
    assert wc.decode_word(callback.payload, 1) == 77


def test_offchain_history_regular_slice_is_truncated():
    chain, oracle, provider, sink = make_rig("offchain-history")
    feed_table_updates(chain, provider, through=78)
    callback = provider.respond(OracleQuery(sink.address, 1, wc.encode_word(75)))
    assert wc.decode_pairs(callback.payload, 1) == [(77, 2)]


def test_query_log_round_trip_via_chain():
    chain, oracle, provider, sink = make_rig("request-response")
    feed_table_updates(chain, provider, through=74)
    ctx = ctx_for(chain)
    oracle.request(ctx, sink.address, 3, b"")
    provider.after_block(
        [type("R", (), {"status": "ok", "logs": ctx.logs})()], chain.height
    )
    receipts = mine(chain, provider)
    assert [r.tx.function for r in receipts] == ["oracle_callback"]
    assert sink.received[0][1] == "oracle_callback"


# --- subscribe ---------------------------------------------------------------------


def test_subscribe_pushes_current_value_next_step():
    chain, oracle, provider, sink = make_rig("pubsub")
    feed_table_updates(chain, provider, through=74)
    ctx = ctx_for(chain)
    oracle.subscribe(ctx, sink.address, b"")
    provider.after_block(
        [type("R", (), {"status": "ok", "logs": ctx.logs})()], chain.height
    )
    receipts = mine(chain, provider)
    pushes = [r for r in receipts if r.tx.function == "push"]
    assert len(pushes) == 1
    assert pushes[0].mined_at == 75
    assert wc.decode_word(pushes[0].tx.payload, 1) == 74  # observation step
    assert wc.decode_word(pushes[0].tx.payload, 2) == 1


def test_conditional_subscribe_already_satisfied_signals_subscription_step():
    chain, oracle, provider, sink = make_rig("pubsub-cond")
    feed_table_updates(chain, provider, through=78)
    ctx = ctx_for(chain)
    oracle.subscribe(ctx, sink.address, wc.encode_text("d_w >= 2"))
    provider.after_block(
        [type("R", (), {"status": "ok", "logs": ctx.logs})()], chain.height
    )
    receipts = mine(chain, provider)
    pushes = [r for r in receipts if r.tx.function == "push"]
    assert len(pushes) == 1
    assert wc.decode_word(pushes[0].tx.payload, 1) == 78


def test_duplicate_subscription_reverts():
    chain, oracle, provider, sink = make_rig("pubsub")
    ctx = ctx_for(chain)
    oracle.subscribe(ctx, sink.address, b"")
    from deferred_choice.ledger import Revert

    with pytest.raises(Revert):
        oracle.subscribe(ctx, sink.address, b"")


# --- cross-architecture properties ---------------------------------------------------


def random_updates(rng, count):
    at = 0
    updates = []
    for _ in range(count):
        at += rng.randint(1, 4)
        updates.append((at, rng.randint(0, 5)))
    return updates


def test_history_equivalence_on_and_off_chain():
    import random

    rng = random.Random(5)
    for _ in range(50):
        updates = random_updates(rng, rng.randint(1, 12))
        chain_on, on, prov_on, _ = make_rig("onchain-history")
        chain_off, off, prov_off, _ = make_rig("offchain-history")
        for at, value in updates:
            advance_to(chain_on, prov_on, at - 1)
            prov_on.on_external_update(value, at)
            mine(chain_on, prov_on)
            prov_off.on_external_update(value, at)
        from_ts = rng.randint(0, updates[0][0])
        condition = parse(f"d_w >= {rng.randint(1, 5)}")
        assert [(e.at, e.value) for e in history_slice(on.entries, from_ts)] == [
            (e.at, e.value) for e in history_slice(prov_off.state.history, from_ts)
        ]
        assert (
            earliest_satisfied(on.entries, from_ts, condition, "d_w")[0]
            == earliest_satisfied(prov_off.state.history, from_ts, condition, "d_w")[0]
        )


def test_conditional_agrees_with_scan_over_regular_slice():
    import random

    rng = random.Random(9)
    for _ in range(50):
        updates = random_updates(rng, rng.randint(1, 12))
        entries = []
        last = None
        for at, value in updates:
            if value != last:
                entries.append(HistoryEntry(at, value))
                last = value
        from_ts = rng.randint(0, updates[0][0])  # at or before the first entry
        condition = parse(f"d_w >= {rng.randint(1, 5)}")
        found, _ = earliest_satisfied(entries, from_ts, condition, "d_w")
        from deferred_choice.oracles import slice_first_satisfied

        hit = slice_first_satisfied(
            [(e.at, e.value) for e in history_slice(entries, from_ts)], condition, "d_w"
        )
        assert found == (NEVER if hit is None else hit)


def test_pubsub_completeness_one_push_per_change():
    chain, oracle, provider, sink = make_rig("pubsub")
    advance_to(chain, provider, 1)
    provider.on_external_update(0, 2)
    mine(chain, provider)
    ctx = ctx_for(chain)
    oracle.subscribe(ctx, sink.address, b"")
    provider.after_block(
        [type("R", (), {"status": "ok", "logs": ctx.logs})()], chain.height
    )
    mine(chain, provider)  # catch-up push
    pushes_before = sum(1 for _, fn, _ in sink.received if fn == "push")
    values = [0, 1, 1, 2, 2, 3]
    changes = 0
    last = 0
    for offset, value in enumerate(values):
        if value != last:
            changes += 1
        last = value
        provider.on_external_update(value, chain.height + 1)
        mine(chain, provider)
    pushes = sum(1 for _, fn, _ in sink.received if fn == "push") - pushes_before
    assert pushes == changes


def test_storage_oracle_is_memoryless():
    chain, oracle, provider, _ = make_rig("storage")
    advance_to(chain, provider, 1)
    for step, value in ((2, 4), (3, 1)):
        provider.on_external_update(value, step)
        mine(chain, provider)
    assert wc.decode_word(oracle.query(ctx_for(chain), b"")) == 1
    assert "at:0" not in oracle.storage

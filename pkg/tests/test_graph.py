import io
import json
import random
from collections import Counter
from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from nftwash.events import Kind, NftId, TradeEvent
from nftwash.graph import Edge, NftGraph, build_graphs, sale, transfer

CONTRACTS = ["0x" + c * 40 for c in "abc"]


def event(tx, nft, ts, kind=Kind.SALE, src="a", dst="b", usd="10", coll="c"):
    return TradeEvent(nft, kind, tx, ts, src, dst, coll,
                      usd_price=Decimal(usd) if kind is Kind.SALE else None)


def random_events(rng, n, n_tokens):
    nfts = [NftId(CONTRACTS[i % 3], i) for i in range(n_tokens)]
    addrs = [f"u{i}" for i in range(25)]
    return [
        event(f"tx{i:05d}", rng.choice(nfts), rng.randint(1, 500),
              rng.choice(list(Kind)), rng.choice(addrs), rng.choice(addrs),
              str(rng.randint(1, 999)))
        for i in range(n)
    ]


def test_empty():
    assert len(build_graphs([])) == 0


def test_two_tokens():
    a, b = NftId(CONTRACTS[0], 1), NftId(CONTRACTS[0], 2)
    gs = build_graphs([event("1", a, 1), event("2", a, 2), event("3", b, 1)])
    assert len(gs) == 2
    assert len(gs[a].edges) == 2 and len(gs[b].edges) == 1


def test_thousand_events_match_group_by():
    rng = random.Random(3)
    events = random_events(rng, 1000, 10)
    gs = build_graphs(events)
    assert {nft: len(g.edges) for nft, g in gs.graphs.items()} == Counter(e.nft for e in events)
    assert gs.edge_count == len(events)


@given(st.integers(0, 10**6), st.integers(0, 300), st.integers(1, 20))
def test_partition_and_node_sets(seed, n, n_tokens):
    events = random_events(random.Random(seed), n, n_tokens)
    gs = build_graphs(events)
    assert Counter(e.tx_id for g in gs for e in g.edges) == Counter(e.tx_id for e in events)
    for g in gs:
        keys = [(e.timestamp, e.tx_id) for e in g.edges]
        assert keys == sorted(keys)
        own = [e for e in events if e.nft == g.nft]
        assert g.nodes == {e.from_address for e in own} | {e.to_address for e in own}


def test_transfers_are_zero_weight_edges():
    nft = NftId(CONTRACTS[1], 9)
    gs = build_graphs([event("t", nft, 5, Kind.TRANSFER)])
    (e,) = gs[nft].edges
    assert e.kind is Kind.TRANSFER and e.usd_weight == 0


def test_multi_edges_kept():
    g = NftGraph.of([sale("x", "a", "b", 1), sale("y", "a", "b", 2)])
    assert len(g.edges) == 2 and g.nodes == {"a", "b"}


def test_sale_without_usd_rejected():
    nft = NftId(CONTRACTS[0], 1)
    ev = TradeEvent(nft, Kind.SALE, "x", 1, "a", "b", "c", payment_token="ETH", payment_amount=Decimal(1))
    with pytest.raises(ValueError):
        Edge.from_event(ev)


@pytest.mark.parametrize("edge", [
    Edge("x", "a", "b", 1, Kind.SALE, Decimal(0)),
    Edge("x", "a", "b", 1, Kind.TRANSFER, Decimal(-1)),
])
def test_bad_weights_rejected(edge):
    with pytest.raises(ValueError):
        NftGraph.of([edge])


def test_collection_from_earliest_event():
    nft = NftId(CONTRACTS[2], 4)
    gs = build_graphs([event("late", nft, 9, coll="renamed"), event("early", nft, 2, coll="orig")])
    assert gs[nft].collection == "orig"


def test_dump_has_one_record_per_graph():
    rng = random.Random(8)
    gs = build_graphs(random_events(rng, 50, 4))
    buf = io.StringIO()
    gs.dump(buf)
    recs = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert len(recs) == len(gs)
    assert sum(len(r["edges"]) for r in recs) == 50
    assert all(r["nodes"] == len(g.nodes) for r, g in zip(recs, gs))


def test_transfer_helper():
    assert transfer("t", "a", "b", 3).usd_weight == 0

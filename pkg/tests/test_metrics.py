import logging
import random
from collections import defaultdict
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from nftwash.config import DAY, HOUR
from nftwash.cycles import CycleFinding, find_cycles
from nftwash.events import Kind, NftId, TradeEvent
from nftwash.graph import build_graphs, sale, transfer
from nftwash.metrics import (
    Dataset,
    DatasetTotals,
    FlagCounts,
    MarketReport,
    build_report,
    cycle_length_distribution,
    elapsed_bucket,
    elapsed_buckets,
    flag_union,
    lifetime_bin,
    lifetime_profile,
    median_duration_by_length,
    partner_stats,
    per_collection,
    price_impact,
    share,
    summarize,
)
from nftwash.sequences import SequenceFinding, find_sequences

NFT = NftId("0x" + "ab" * 20, 1)
NFT2 = NftId("0x" + "ab" * 20, 2)


def tev(tx, ts, src="a", dst="b", usd="100", nft=NFT, coll="c", kind=Kind.SALE):
    return TradeEvent(nft, kind, tx, ts, src, dst, coll,
                      usd_price=Decimal(usd) if kind is Kind.SALE else None)


def cycle(*edges, nft=NFT):
    return CycleFinding(nft, tuple(edges))


def ring(length, start, elapsed, tag):
    """A cycle of ``length`` sales spanning exactly ``elapsed`` seconds."""
    if length == 1:
        return cycle(sale(f"{tag}0", "A", "A", start))
    nodes = [f"{tag}n{i}" for i in range(length)]
    times = [start + elapsed * i // (length - 1) for i in range(length)]
    return cycle(*[sale(f"{tag}{i}", nodes[i], nodes[(i + 1) % length], times[i]) for i in range(length)])


# -- flag_union ---------------------------------------------------------------

def test_flag_union_empty():
    f = flag_union()
    assert not f.addresses and not f.sale_edges and not f.nfts and f.usd_volume == 0


def test_flag_union_one_cycle():
    f = flag_union([cycle(sale("x", "A", "B", 1, "100"), sale("y", "B", "A", 2, "100"))])
    c = f.counts()
    assert (c.addresses, c.sale_transactions, c.usd_volume, c.nfts) == (2, 2, Decimal(200), 1)
    assert c.cyclic_transactions == 2 and c.sequential_transactions == 0


def test_flag_union_shared_edge_counted_once():
    shared = sale("s", "B", "A", 2, "50")
    cyc = cycle(sale("x", "A", "B", 1, "100"), shared)
    seq = SequenceFinding(NFT, (sale("w", "C", "B", 0, "50"), shared))
    f = flag_union([cyc], [seq])
    assert f.sale_tx_ids == {"x", "s", "w"}
    assert f.usd_volume == Decimal(200)
    assert f.addresses == {"A", "B", "C"}
    c = f.counts()
    assert c.cyclic_transactions + c.sequential_transactions == c.sale_transactions


def test_flag_union_transfers_add_no_volume():
    f = flag_union([cycle(sale("x", "A", "B", 1, "70"), transfer("t", "B", "A", 2))])
    assert f.sale_tx_ids == {"x"} and f.usd_volume == Decimal(70)


@given(st.permutations(range(4)), st.integers(1, 3))
def test_flag_union_set_semantics(order, reps):
    cycles = [ring(2, 10 * i, 5, f"r{i}") for i in range(4)]
    shuffled = [cycles[i] for i in order]
    assert flag_union(shuffled * reps) == flag_union(cycles)


# -- summarize and shares -----------------------------------------------------

def test_overview_table_arithmetic():
    totals = DatasetTotals(459_954, 1_779_380, Decimal("6.9e9"), 3_572_483)
    flags = FlagCounts(18_117, 36_385, Decimal("149.5e6"), 16_289)
    s = summarize(flags, totals)
    assert s.addresses.share == Decimal("3.94")
    assert s.transactions.share == Decimal("2.04")
    assert s.volume_usd.share == Decimal("2.17")
    assert s.nfts.share == Decimal("0.46")


def test_share_rounding_modes():
    assert share(18_117, 459_954, "ROUND_DOWN") == Decimal("3.93")
    assert share(1, 8) == Decimal("12.50")
    assert share(1, 800) == Decimal("0.13")  # 0.125 rounds half-up


def test_zero_denominator_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="nftwash.metrics"):
        assert share(3, 0) == 0
    assert caplog.records


def test_empty_summary_is_zero():
    s = summarize(flag_union(), DatasetTotals())
    assert s.addresses.share == s.volume_usd.share == 0


# -- distributions ------------------------------------------------------------

def test_length_distribution():
    assert cycle_length_distribution([ring(2, 0, 5, "a")])["two_tx"] == 1.0
    assert set(cycle_length_distribution([]).values()) == {0.0}
    mixed = [ring(2, 0, 5, f"a{i}") for i in range(6)] + [ring(3, 0, 5, "b")] + \
            [ring(4, 0, 5, f"c{i}") for i in range(3)]
    d = cycle_length_distribution(mixed)
    assert d == {"self_loop": 0.0, "two_tx": 0.6, "three_tx": 0.1, "more_than_three": 0.3}


def test_elapsed_bucket_boundaries():
    assert elapsed_bucket(2 * HOUR) == "lt_1d"
    assert elapsed_bucket(DAY - 1) == "lt_1d"
    assert elapsed_bucket(DAY) == "1d_7d"
    assert elapsed_bucket(7 * DAY) == "7d_30d"
    assert elapsed_bucket(30 * DAY - 1) == "7d_30d"
    assert elapsed_bucket(30 * DAY) == "ge_30d"


def test_elapsed_buckets_hand_count():
    durations = [HOUR, 5 * HOUR, 23 * HOUR, 2 * DAY, 6 * DAY, 8 * DAY, 29 * DAY, 30 * DAY, 45 * DAY, 400 * DAY]
    b = elapsed_buckets([ring(2, 100, d, f"r{i}") for i, d in enumerate(durations)])
    assert b == {"lt_1d": 0.3, "1d_7d": 0.2, "7d_30d": 0.2, "ge_30d": 0.3, "lt_30d_cumulative": 0.7}
    assert abs(sum(b[k] for k in ("lt_1d", "1d_7d", "7d_30d", "ge_30d")) - 1) < 1e-9


def test_median_duration():
    assert median_duration_by_length([ring(2, 0, 4 * HOUR, "a")]) == {2: 4 * HOUR}
    assert median_duration_by_length([ring(2, 0, 2 * HOUR, "a"), ring(2, 0, 6 * HOUR, "b")]) == {2: 2 * HOUR}
    m = median_duration_by_length([ring(3, 0, 54 * HOUR, "c")])
    assert 2 not in m and m == {3: 54 * HOUR}


@given(st.lists(st.integers(0, 10**7), min_size=1, max_size=15))
def test_median_matches_sort_oracle(durations):
    cycles = [ring(2, 0, d, f"r{i}") for i, d in enumerate(durations)]
    assert median_duration_by_length(cycles)[2] == sorted(durations)[(len(durations) - 1) // 2]


# -- price impact -------------------------------------------------------------

def test_price_impact_single_pair():
    events = [tev("x", 1, "A", "B", "100"), tev("y", 2, "B", "A", "100"), tev("z", 3, "A", "C", "130.53")]
    flags = flag_union([cycle(sale("x", "A", "B", 1, "100"), sale("y", "B", "A", 2, "100"))])
    assert price_impact(flags, events) == Decimal("0.3053")


def test_price_impact_absent_without_follow_up():
    events = [tev("x", 1, "A", "B"), tev("y", 2, "B", "A")]
    flags = flag_union([cycle(sale("x", "A", "B", 1), sale("y", "B", "A", 2))])
    assert price_impact(flags, events) is None


def test_price_impact_symmetric_pairs_cancel():
    events = [tev("x", 1, "A", "A", "100"), tev("o1", 2, "A", "B", "110"),
              tev("y", 3, "B", "B", "100"), tev("o2", 4, "B", "C", "90")]
    flags = flag_union([cycle(sale("x", "A", "A", 1, "100")), cycle(sale("y", "B", "B", 3, "100"))])
    assert price_impact(flags, events) == 0


def test_price_impact_skips_same_timestamp_sales():
    events = [tev("x", 5, "A", "A", "100"), tev("same", 5, "C", "D", "500"), tev("later", 6, "D", "E", "120")]
    flags = flag_union([cycle(sale("x", "A", "A", 5, "100"))])
    assert price_impact(flags, events) == Decimal("0.2")


def test_price_impact_matches_scan_oracle():
    rng = random.Random(4)
    events, cycles = [], []
    for i in range(300):
        nft = NftId("0x" + "ab" * 20, rng.randint(0, 9))
        usd = str(rng.randint(50, 150))
        ev = tev(f"t{i:03d}", rng.randint(1, 100), "A", "A", usd, nft)
        events.append(ev)
        if rng.random() < 0.3:
            cycles.append(cycle(sale(ev.tx_id, "A", "A", ev.timestamp, usd), nft=nft))
    flags = flag_union(cycles)
    ratios = []
    for ev in events:
        if ev.tx_id in flags.sale_edges:
            later = [o for o in events if o.nft == ev.nft and o.timestamp > ev.timestamp
                     and o.tx_id not in flags.sale_edges]
            if later:
                nxt = min(later, key=lambda o: (o.timestamp, o.tx_id))
                ratios.append(nxt.usd_price / ev.usd_price - 1)
    assert price_impact(flags, events) == sum(ratios, Decimal(0)) / len(ratios)


# -- lifetime -----------------------------------------------------------------

def test_lifetime_bins():
    assert lifetime_bin(50, 0, 100) == 5
    assert lifetime_bin(0, 0, 100) == 0
    assert lifetime_bin(100, 0, 100) == 9
    assert lifetime_bin(7, 7, 7) == 0


def test_lifetime_profile_first_event_and_oracle():
    rng = random.Random(12)
    events = [tev(f"t{i:03d}", rng.randint(1000, 5000), nft=NftId("0x" + "ab" * 20, i % 5),
                  coll=f"c{i % 5 % 2}") for i in range(200)]
    flagged = [e for e in events if rng.random() < 0.4]
    flags = flag_union([cycle(sale(e.tx_id, "A", "A", e.timestamp), nft=e.nft) for e in flagged])
    ds = Dataset(events)
    span = {}
    for e in events:
        lo, hi = span.get(e.collection, (e.timestamp, e.timestamp))
        span[e.collection] = (min(lo, e.timestamp), max(hi, e.timestamp))
    hist = [0] * 10
    for e in flagged:
        lo, hi = span[e.collection]
        hist[min(int(Fraction(e.timestamp - lo, hi - lo) * 10), 9)] += 1
    assert lifetime_profile(flags, ds) == hist

    first = min(events, key=lambda e: (e.timestamp, e.tx_id))
    only_first = flag_union([cycle(sale(first.tx_id, "A", "A", first.timestamp), nft=first.nft)])
    assert lifetime_profile(only_first, ds) == [1] + [0] * 9


# -- partners -----------------------------------------------------------------

def test_partner_counts():
    events = [tev("1", 1, "A", "B"), tev("2", 2, "A", "B"), tev("3", 3, "A", "C"),
              tev("t", 4, "Z", "Y", kind=Kind.TRANSFER)]
    stats = {a.address: a for a in partner_stats(events, flag_union())}
    assert (stats["A"].trade_count, stats["A"].unique_partners) == (3, 2)
    assert "Z" not in stats


def test_partner_stats_group_by_oracle():
    rng = random.Random(21)
    addrs = [f"u{i}" for i in range(12)]
    events = [tev(f"t{i:03d}", i, rng.choice(addrs), rng.choice(addrs)) for i in range(400)]
    flags = flag_union([cycle(sale(e.tx_id, e.from_address, e.from_address, e.timestamp))
                        for e in events[::7] if e.from_address == e.to_address])
    trades, partners, hits = defaultdict(int), defaultdict(set), defaultdict(int)
    for e in events:
        for me, other in {(e.from_address, e.to_address), (e.to_address, e.from_address)}:
            trades[me] += 1
            partners[me].add(other)
            hits[me] += e.tx_id in flags.sale_edges
    for a in partner_stats(events, flags):
        assert (a.trade_count, a.unique_partners, a.flagged_trade_count) == \
               (trades[a.address], len(partners[a.address]), hits[a.address])
        assert a.unique_partners <= a.trade_count and a.flagged_trade_count <= a.trade_count


# -- per collection -----------------------------------------------------------

def two_collection_fixture():
    events = [
        tev("a1", 1, "A", "B", "100", NFT, "alpha"), tev("a2", 2, "B", "A", "100", NFT, "alpha"),
        tev("a3", 3, "A", "C", "300", NFT, "alpha"),
        tev("b1", 1, "X", "Y", "50", NFT2, "beta"),
    ]
    flags = flag_union([cycle(sale("a1", "A", "B", 1, "100"), sale("a2", "B", "A", 2, "100"))])
    return events, flags


def test_per_collection_hand_computed():
    events, flags = two_collection_fixture()
    alpha, beta = per_collection(flags, Dataset(events))
    assert alpha.collection == "alpha"
    assert alpha.share_addresses == Decimal("66.67")
    assert alpha.share_transactions == Decimal("66.67")
    assert alpha.flagged_usd == Decimal(200) and alpha.share_volume == Decimal("40.00")
    assert alpha.share_nfts == Decimal("100.00")
    assert (beta.share_addresses, beta.share_transactions, beta.flagged_usd, beta.share_nfts) == (0, 0, 0, 0)


def test_fully_flagged_collection():
    events = [tev("a1", 1, "A", "B"), tev("a2", 2, "B", "A")]
    flags = flag_union([cycle(sale("a1", "A", "B", 1), sale("a2", "B", "A", 2))])
    (c,) = per_collection(flags, Dataset(events))
    assert c.share_addresses == c.share_transactions == c.share_volume == c.share_nfts == Decimal(100)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_conservation_on_random_markets(seed):
    rng = random.Random(seed)
    events = []
    for i in range(120):
        token = rng.randint(0, 7)
        events.append(tev(f"t{i:03d}", rng.randint(1, 60), rng.choice("ABCD"), rng.choice("ABCD"),
                          f"{rng.randint(1, 10**6)}.{rng.randint(0, 99):02d}",
                          NftId("0x" + "cd" * 20, token), f"coll{token % 3}"))
    cycles, seqs = [], []
    for g in build_graphs(events):
        c = find_cycles(g)
        cycles += c
        seqs += find_sequences(g, exclude={tx for f in c for tx in f.tx_ids})
    flags = flag_union(cycles, seqs)
    rows = per_collection(flags, Dataset(events))
    assert sum((r.flagged_usd for r in rows), Decimal(0)) == flags.usd_volume
    assert all(0 <= x <= 100 for r in rows for x in
               (r.share_addresses, r.share_transactions, r.share_volume, r.share_nfts))
    report = build_report(events, cycles, seqs)
    t = report.totals
    assert t.cyclic_transactions + t.sequential_transactions == t.transactions.flagged
    for row in (t.addresses, t.transactions, t.volume_usd, t.nfts):
        assert row.flagged <= row.dataset
    if cycles:
        assert abs(sum(report.cycle_length_distribution.values()) - 1) < 1e-9
    assert MarketReport.from_json(report.to_json()) == report


def test_report_round_trip_and_plot_tables():
    events, flags = two_collection_fixture()
    cycles = find_cycles(build_graphs(events)[NFT])
    report = build_report(events, cycles, [], {"velocity_window": 43200}, "digest", 0)
    again = MarketReport.from_json(report.to_json())
    assert again == report and again.to_json() == report.to_json()
    tables = report.plot_tables()
    assert set(tables) == {"cycle_elapsed.csv", "lifetime_profile.csv", "partners.csv"}
    assert len(tables["lifetime_profile.csv"].splitlines()) == 11
    assert "Overview of the results" in report.render_text()

"""Aggregate statistics over flagged transactions.

USD amounts stay in ``Decimal`` throughout so that per-collection volumes add
up exactly to the overall flagged volume. Percentage shares are rounded to two
decimals (half-up by default).
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
import decimal
from typing import Iterable, Mapping, Optional, Sequence, Union

from .cycles import CycleClass, CycleFinding, classify_cycle
from .events import Kind, NftId, TradeEvent
from .config import DAY
from .sequences import SequenceFinding

log = logging.getLogger(__name__)

Finding = Union[CycleFinding, SequenceFinding]
CENT = Decimal("0.01")
ZERO = Decimal(0)

ELAPSED_BUCKETS = ("lt_1d", "1d_7d", "7d_30d", "ge_30d")
LIFETIME_BINS = 10


def share(flagged, total, rounding: str = ROUND_HALF_UP) -> Decimal:
    """``100 * flagged / total`` rounded to two decimals; 0 when total is 0."""
    if not total:
        if flagged:
            log.warning("share with zero denominator (flagged=%s); reporting 0", flagged)
        return Decimal("0.00")
    with decimal.localcontext() as ctx:
        ctx.prec = 50
        value = Decimal(100) * Decimal(flagged) / Decimal(total)
    return value.quantize(CENT, rounding=rounding)


@dataclass(frozen=True)
class FlagSet:
    """Union of everything flagged by either detector.

    ``sale_edges`` maps each flagged sale ``tx_id`` to its NFT and USD value,
    so an edge shared by several findings is counted once.
    """

    addresses: frozenset = frozenset()
    sale_edges: Mapping[str, tuple[NftId, Decimal]] = field(default_factory=dict)
    nfts: frozenset = frozenset()
    addresses_by_nft: Mapping[NftId, frozenset] = field(default_factory=dict)
    cyclic_tx_ids: frozenset = frozenset()
    sequential_tx_ids: frozenset = frozenset()

    @property
    def sale_tx_ids(self) -> frozenset:
        return frozenset(self.sale_edges)

    @property
    def usd_volume(self) -> Decimal:
        return sum((usd for _, usd in self.sale_edges.values()), ZERO)

    def counts(self) -> "FlagCounts":
        return FlagCounts(
            addresses=len(self.addresses),
            sale_transactions=len(self.sale_edges),
            usd_volume=self.usd_volume,
            nfts=len(self.nfts),
            cyclic_transactions=len(self.cyclic_tx_ids),
            sequential_transactions=len(self.sequential_tx_ids),
        )


def flag_union(cycles: Iterable[CycleFinding] = (), sequences: Iterable[SequenceFinding] = ()) -> FlagSet:
    addresses: set = set()
    sale_edges: dict = {}
    by_nft: dict = defaultdict(set)
    cyclic: set = set()
    sequential: set = set()
    for group, target in ((cycles, cyclic), (sequences, sequential)):
        for f in group:
            addrs = set(f.addresses)
            if isinstance(f, SequenceFinding):
                addrs.update(e.to_address for e in f.edges)
            addresses |= addrs
            by_nft[f.nft] |= addrs
            for e in f.edges:
                if e.is_sale:
                    sale_edges[e.tx_id] = (f.nft, e.usd_weight)
                    target.add(e.tx_id)
    sequential -= cyclic
    return FlagSet(
        addresses=frozenset(addresses),
        sale_edges=dict(sorted(sale_edges.items())),
        nfts=frozenset(by_nft),
        addresses_by_nft={k: frozenset(v) for k, v in sorted(by_nft.items())},
        cyclic_tx_ids=frozenset(cyclic),
        sequential_tx_ids=frozenset(sequential),
    )


@dataclass(frozen=True)
class FlagCounts:
    addresses: int = 0
    sale_transactions: int = 0
    usd_volume: Decimal = ZERO
    nfts: int = 0
    cyclic_transactions: int = 0
    sequential_transactions: int = 0


@dataclass(frozen=True)
class DatasetTotals:
    addresses: int = 0
    sale_transactions: int = 0
    usd_volume: Decimal = ZERO
    nfts: int = 0


@dataclass
class _CollectionAcc:
    addresses: set = field(default_factory=set)
    nfts: set = field(default_factory=set)
    sales: int = 0
    usd: Decimal = ZERO
    first_ts: Optional[int] = None
    last_ts: Optional[int] = None


class Dataset:
    """Per-collection and per-NFT index over a cleaned event list."""

    def __init__(self, events: Iterable[TradeEvent]):
        self.events = sorted(events, key=lambda e: (e.timestamp, e.tx_id))
        self.collection_of: dict[NftId, str] = {}
        self.collections: dict[str, _CollectionAcc] = {}
        self.sales_by_nft: dict[NftId, list[TradeEvent]] = defaultdict(list)
        addresses: set = set()
        sales = 0
        usd = ZERO
        for ev in self.events:
            coll = self.collection_of.setdefault(ev.nft, ev.collection)
            acc = self.collections.get(coll)
            if acc is None:
                acc = self.collections[coll] = _CollectionAcc()
            acc.addresses.add(ev.from_address)
            acc.addresses.add(ev.to_address)
            acc.nfts.add(ev.nft)
            if acc.first_ts is None:
                acc.first_ts = ev.timestamp
            acc.last_ts = ev.timestamp
            addresses.add(ev.from_address)
            addresses.add(ev.to_address)
            if ev.kind is Kind.SALE:
                sales += 1
                usd += ev.usd_price
                acc.sales += 1
                acc.usd += ev.usd_price
                self.sales_by_nft[ev.nft].append(ev)
        self.totals = DatasetTotals(len(addresses), sales, usd, len(self.collection_of))

    def span(self, collection: str) -> tuple[int, int]:
        acc = self.collections[collection]
        return acc.first_ts, acc.last_ts


@dataclass(frozen=True)
class ShareRow:
    dataset: Union[int, Decimal]
    flagged: Union[int, Decimal]
    share: Decimal


@dataclass(frozen=True)
class TotalsSection:
    addresses: ShareRow
    transactions: ShareRow
    volume_usd: ShareRow
    nfts: ShareRow
    cyclic_transactions: int
    sequential_transactions: int


def summarize(flags: Union[FlagSet, FlagCounts], totals: DatasetTotals, rounding: str = ROUND_HALF_UP) -> TotalsSection:
    c = flags.counts() if isinstance(flags, FlagSet) else flags

    def row(total, flagged):
        return ShareRow(total, flagged, share(flagged, total, rounding))

    return TotalsSection(
        addresses=row(totals.addresses, c.addresses),
        transactions=row(totals.sale_transactions, c.sale_transactions),
        volume_usd=row(totals.usd_volume, c.usd_volume),
        nfts=row(totals.nfts, c.nfts),
        cyclic_transactions=c.cyclic_transactions,
        sequential_transactions=c.sequential_transactions,
    )


def cycle_length_distribution(cycles: Sequence[CycleFinding]) -> dict[str, float]:
    counts = {k.value: 0 for k in CycleClass}
    for c in cycles:
        counts[classify_cycle(c).value] += 1
    n = len(cycles)
    return {k: (v / n if n else 0.0) for k, v in counts.items()}


def elapsed_bucket(seconds: int) -> str:
    if seconds < DAY:
        return "lt_1d"
    if seconds < 7 * DAY:
        return "1d_7d"
    if seconds < 30 * DAY:
        return "7d_30d"
    return "ge_30d"


def elapsed_buckets(cycles: Sequence[CycleFinding]) -> dict[str, float]:
    counts = dict.fromkeys(ELAPSED_BUCKETS, 0)
    for c in cycles:
        counts[elapsed_bucket(c.elapsed)] += 1
    n = len(cycles)
    out = {k: (v / n if n else 0.0) for k, v in counts.items()}
    out["lt_30d_cumulative"] = ((counts["lt_1d"] + counts["1d_7d"] + counts["7d_30d"]) / n) if n else 0.0
    return out


def median_duration_by_length(cycles: Sequence[CycleFinding]) -> dict[int, int]:
    """Lower median of elapsed seconds per cycle length."""
    by_len: dict[int, list[int]] = defaultdict(list)
    for c in cycles:
        by_len[c.length].append(c.elapsed)
    out = {}
    for length in sorted(by_len):
        vals = sorted(by_len[length])
        out[length] = vals[(len(vals) - 1) // 2]
    return out


def price_impact(flags: FlagSet, events: Union[Dataset, Iterable[TradeEvent]]) -> Optional[Decimal]:
    """Mean relative price change from a flagged sale to the next organic sale.

    For every flagged sale, the earliest strictly later sale of the same NFT
    that is not flagged is taken as the follow-up; the statistic averages
    ``next / flagged - 1`` over flagged sales. Returns ``None`` when no
    flagged sale has a follow-up.
    """
    ds = events if isinstance(events, Dataset) else Dataset(events)
    flagged = flags.sale_edges
    ratios: list[Decimal] = []
    for nft in sorted(flags.nfts):
        sales = ds.sales_by_nft.get(nft, [])
        next_organic: Optional[TradeEvent] = None
        # walk backwards so next_organic is the earliest later organic sale
        i = len(sales) - 1
        while i >= 0:
            ts = sales[i].timestamp
            j = i
            while j >= 0 and sales[j].timestamp == ts:
                j -= 1
            group = sales[j + 1:i + 1]
            for ev in group:
                if ev.tx_id in flagged and next_organic is not None:
                    ratios.append(next_organic.usd_price / ev.usd_price - 1)
            organic = [ev for ev in group if ev.tx_id not in flagged]
            if organic:
                next_organic = organic[0]
            i = j
    if not ratios:
        return None
    return sum(ratios, ZERO) / len(ratios)


def lifetime_bin(ts: int, first: int, last: int, bins: int = LIFETIME_BINS) -> int:
    if last <= first:
        return 0
    return min((ts - first) * bins // (last - first), bins - 1)


def lifetime_profile(flags: FlagSet, dataset: Dataset, bins: int = LIFETIME_BINS, flagged_only: bool = True) -> list[int]:
    """Histogram of sale positions over each collection's normalised lifetime."""
    hist = [0] * bins
    for ev in dataset.events:
        if ev.kind is not Kind.SALE:
            continue
        if flagged_only and ev.tx_id not in flags.sale_edges:
            continue
        first, last = dataset.span(dataset.collection_of[ev.nft])
        hist[lifetime_bin(ev.timestamp, first, last, bins)] += 1
    return hist


@dataclass(frozen=True)
class AddressActivity:
    address: str
    trade_count: int
    unique_partners: int
    flagged_trade_count: int


def partner_stats(events: Iterable[TradeEvent], flags: FlagSet) -> list[AddressActivity]:
    trades: dict[str, int] = defaultdict(int)
    partners: dict[str, set] = defaultdict(set)
    flagged: dict[str, int] = defaultdict(int)
    for ev in events:
        if ev.kind is not Kind.SALE:
            continue
        hit = ev.tx_id in flags.sale_edges
        for me, other in ((ev.from_address, ev.to_address), (ev.to_address, ev.from_address)):
            trades[me] += 1
            partners[me].add(other)
            if hit:
                flagged[me] += 1
            if me == other:
                break
    return [
        AddressActivity(a, trades[a], len(partners[a]), flagged[a])
        for a in sorted(trades)
    ]


@dataclass(frozen=True)
class CollectionStats:
    collection: str
    share_addresses: Decimal
    share_transactions: Decimal
    flagged_usd: Decimal
    share_volume: Decimal
    share_nfts: Decimal


def per_collection(flags: FlagSet, dataset: Dataset, rounding: str = ROUND_HALF_UP) -> list[CollectionStats]:
    f_addr: dict[str, set] = defaultdict(set)
    f_nfts: dict[str, set] = defaultdict(set)
    f_tx: dict[str, int] = defaultdict(int)
    f_usd: dict[str, Decimal] = defaultdict(lambda: ZERO)
    for nft, addrs in flags.addresses_by_nft.items():
        coll = dataset.collection_of[nft]
        f_addr[coll] |= addrs
        f_nfts[coll].add(nft)
    for nft, usd in flags.sale_edges.values():
        coll = dataset.collection_of[nft]
        f_tx[coll] += 1
        f_usd[coll] += usd
    out = []
    for coll in sorted(dataset.collections):
        acc = dataset.collections[coll]
        out.append(CollectionStats(
            collection=coll,
            share_addresses=share(len(f_addr[coll]), len(acc.addresses), rounding),
            share_transactions=share(f_tx[coll], acc.sales, rounding),
            flagged_usd=f_usd[coll],
            share_volume=share(f_usd[coll], acc.usd, rounding),
            share_nfts=share(len(f_nfts[coll]), len(acc.nfts), rounding),
        ))
    return out


@dataclass
class MarketReport:
    """Everything the text/JSON report and the plot tables are rendered from."""

    totals: TotalsSection
    per_collection: list[CollectionStats]
    cycle_count: int
    sequence_count: int
    cycle_length_distribution: dict[str, float]
    elapsed_buckets: dict[str, float]
    median_duration_by_length: dict[int, int]
    price_impact_mean_fraction: Optional[Decimal]
    lifetime_profile: list[int]
    lifetime_profile_all_sales: list[int]
    partner_stats: list[AddressActivity]
    cycle_elapsed: list[tuple[str, int, int]] = field(default_factory=list)
    truncated_searches: int = 0
    dataset_digest: str = ""
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["median_duration_by_length"] = {str(k): v for k, v in self.median_duration_by_length.items()}
        d["cycle_elapsed"] = [list(x) for x in self.cycle_elapsed]
        d["labels"] = {
            "transactions": "sale events only",
            "price_impact": "mean over flagged sales of next organic sale price / flagged price - 1",
        }
        return _jsonable(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "MarketReport":
        def row(r):
            return ShareRow(_num(r["dataset"]), _num(r["flagged"]), Decimal(r["share"]))

        t = d["totals"]
        totals = TotalsSection(
            addresses=row(t["addresses"]),
            transactions=row(t["transactions"]),
            volume_usd=row(t["volume_usd"]),
            nfts=row(t["nfts"]),
            cyclic_transactions=t["cyclic_transactions"],
            sequential_transactions=t["sequential_transactions"],
        )
        pi = d["price_impact_mean_fraction"]
        return cls(
            totals=totals,
            per_collection=[
                CollectionStats(c["collection"], Decimal(c["share_addresses"]), Decimal(c["share_transactions"]),
                                Decimal(c["flagged_usd"]), Decimal(c["share_volume"]), Decimal(c["share_nfts"]))
                for c in d["per_collection"]
            ],
            cycle_count=d["cycle_count"],
            sequence_count=d["sequence_count"],
            cycle_length_distribution=dict(d["cycle_length_distribution"]),
            elapsed_buckets=dict(d["elapsed_buckets"]),
            median_duration_by_length={int(k): v for k, v in d["median_duration_by_length"].items()},
            price_impact_mean_fraction=None if pi is None else Decimal(pi),
            lifetime_profile=list(d["lifetime_profile"]),
            lifetime_profile_all_sales=list(d["lifetime_profile_all_sales"]),
            partner_stats=[AddressActivity(**a) for a in d["partner_stats"]],
            cycle_elapsed=[tuple(x) for x in d["cycle_elapsed"]],
            truncated_searches=d["truncated_searches"],
            dataset_digest=d["dataset_digest"],
            config=dict(d["config"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "MarketReport":
        return cls.from_dict(json.loads(text))

    def render_text(self) -> str:
        t = self.totals
        lines = ["Overview of the results", ""]
        lines.append(f"{'':<14}{'Dataset':>18}{'Identified':>18}{'Percentage':>12}")
        for name, r in (("Addresses", t.addresses), ("Transactions", t.transactions),
                        ("Volume in $", t.volume_usd), ("NFTs", t.nfts)):
            lines.append(f"{name:<14}{_fmt(r.dataset):>18}{_fmt(r.flagged):>18}{str(r.share) + '%':>12}")
        lines.append(f"  flagged transactions: cyclic {t.cyclic_transactions}, sequential {t.sequential_transactions}")
        lines.append("  (transactions = sale events only)")
        lines.append("")
        lines.append("Results for each collection")
        lines.append(f"{'Collection':<24}{'A %':>9}{'B %':>9}{'C1 $':>18}{'C2 %':>9}{'D %':>9}")
        for c in self.per_collection:
            lines.append(f"{c.collection[:24]:<24}{str(c.share_addresses):>9}{str(c.share_transactions):>9}"
                         f"{_fmt(c.flagged_usd):>18}{str(c.share_volume):>9}{str(c.share_nfts):>9}")
        lines.append("")
        lines.append(f"Cycles: {self.cycle_count}  Sequences: {self.sequence_count}  "
                     f"Truncated searches: {self.truncated_searches}")
        lines.append("Cycle length shares: " + ", ".join(
            f"{k} {v * 100:.1f}%" for k, v in self.cycle_length_distribution.items()))
        lines.append("Elapsed to close: " + ", ".join(
            f"{k} {v * 100:.1f}%" for k, v in self.elapsed_buckets.items()))
        lines.append("Median hours by length: " + ", ".join(
            f"{k}: {v / 3600:.1f}h" for k, v in self.median_duration_by_length.items()))
        pi = self.price_impact_mean_fraction
        lines.append("Price impact (next organic sale): " + ("n/a" if pi is None else f"{pi * 100:.2f}%"))
        lines.append("Flagged sales by lifetime decile: " + " ".join(str(x) for x in self.lifetime_profile))
        lines.append(f"Dataset digest: {self.dataset_digest}")
        return "\n".join(lines) + "\n"

    def plot_tables(self) -> dict[str, str]:
        """Delimited text for the elapsed, lifetime and partner figures."""
        out = {}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["nft", "length", "elapsed_s"])
        w.writerows(self.cycle_elapsed)
        out["cycle_elapsed.csv"] = buf.getvalue()

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "lo", "hi", "flagged_sales", "all_sales"])
        n = len(self.lifetime_profile)
        for i, (f, a) in enumerate(zip(self.lifetime_profile, self.lifetime_profile_all_sales)):
            w.writerow([i, f"{i / n:.1f}", f"{(i + 1) / n:.1f}", f, a])
        out["lifetime_profile.csv"] = buf.getvalue()

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["address", "trade_count", "unique_partners", "flagged_trade_count"])
        for a in self.partner_stats:
            w.writerow([a.address, a.trade_count, a.unique_partners, a.flagged_trade_count])
        out["partners.csv"] = buf.getvalue()
        return out


def build_report(
    events: Union[Dataset, Iterable[TradeEvent]],
    cycles: Sequence[CycleFinding],
    sequences: Sequence[SequenceFinding],
    cfg_dict: Optional[dict] = None,
    dataset_digest: str = "",
    truncated: int = 0,
    rounding: str = ROUND_HALF_UP,
) -> MarketReport:
    ds = events if isinstance(events, Dataset) else Dataset(events)
    flags = flag_union(cycles, sequences)
    return MarketReport(
        totals=summarize(flags, ds.totals, rounding),
        per_collection=per_collection(flags, ds, rounding),
        cycle_count=len(cycles),
        sequence_count=len(sequences),
        cycle_length_distribution=cycle_length_distribution(cycles),
        elapsed_buckets=elapsed_buckets(cycles),
        median_duration_by_length=median_duration_by_length(cycles),
        price_impact_mean_fraction=price_impact(flags, ds),
        lifetime_profile=lifetime_profile(flags, ds),
        lifetime_profile_all_sales=lifetime_profile(flags, ds, flagged_only=False),
        partner_stats=partner_stats(ds.events, flags),
        cycle_elapsed=[(str(c.nft), c.length, c.elapsed) for c in cycles],
        truncated_searches=truncated,
        dataset_digest=dataset_digest,
        config=dict(cfg_dict or {}),
    )


def _num(x):
    return Decimal(x) if isinstance(x, str) else x


def _fmt(x) -> str:
    if isinstance(x, Decimal):
        return f"{x:,.2f}"
    return f"{x:,}"


def _jsonable(obj):
    if isinstance(obj, Decimal):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj

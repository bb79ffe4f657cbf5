"""Temporal closed-cycle detection on a single NFT graph.

A cycle is a closed walk ``e1 .. ek`` with ``to(ei) == from(ei+1)`` and
``to(ek) == from(e1)``, strictly increasing timestamps, no repeated address
and at least one sale. Edges are swept in time order; whenever an edge can
close a cycle out of still-unused edges, that cycle is recorded and its edges
are removed from the graph before the sweep continues. Removing matched edges
is what splits overlapping activity between the same addresses into separate
sub-cycles that are distinct by time.

When one edge could close several cycles, the one whose edges, read backwards
from the closing edge, are lexicographically latest is chosen. This is the
first cycle met by a backward depth-first search that always tries the most
recent incoming edge first.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Optional, Sequence

from .config import DetectorConfig
from .events import Kind, NftId
from .graph import Edge, NftGraph


class CycleClass(str, Enum):
    SELF_LOOP = "self_loop"
    TWO_TX = "two_tx"
    THREE_TX = "three_tx"
    MORE_THAN_THREE = "more_than_three"

    def __str__(self) -> str:
        return self.value


@dataclass
class SearchStats:
    """Counters shared across graphs; ``truncated`` counts search branches cut
    at ``max_cycle_len``."""

    truncated: int = 0
    graphs: int = 0

    def merge(self, other: "SearchStats") -> "SearchStats":
        return SearchStats(self.truncated + other.truncated, self.graphs + other.graphs)


@dataclass(frozen=True)
class CycleFinding:
    nft: NftId
    edges: tuple[Edge, ...]
    length: int = field(init=False)
    addresses: tuple[str, ...] = field(init=False)
    start_ts: int = field(init=False)
    end_ts: int = field(init=False)
    sale_count: int = field(init=False)
    usd_volume: Decimal = field(init=False)

    def __post_init__(self):
        edges = tuple(self.edges)
        if not edges:
            raise ValueError("empty cycle")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "length", len(edges))
        object.__setattr__(self, "addresses", tuple(e.from_address for e in edges))
        object.__setattr__(self, "start_ts", edges[0].timestamp)
        object.__setattr__(self, "end_ts", edges[-1].timestamp)
        sales = [e for e in edges if e.is_sale]
        object.__setattr__(self, "sale_count", len(sales))
        object.__setattr__(self, "usd_volume", sum((e.usd_weight for e in sales), Decimal(0)))

    @property
    def tx_ids(self) -> tuple[str, ...]:
        return tuple(e.tx_id for e in self.edges)

    @property
    def elapsed(self) -> int:
        return self.end_ts - self.start_ts

    @property
    def kind(self) -> CycleClass:
        return classify_cycle(self)


def classify_cycle(finding: CycleFinding) -> CycleClass:
    n = finding.length
    if n == 1:
        return CycleClass.SELF_LOOP
    if n == 2:
        return CycleClass.TWO_TX
    if n == 3:
        return CycleClass.THREE_TX
    return CycleClass.MORE_THAN_THREE


def check_cycle(edges: Sequence[Edge]) -> None:
    """Raise ``ValueError`` unless ``edges`` form a valid temporal cycle."""
    if not edges:
        raise ValueError("empty cycle")
    for a, b in zip(edges, edges[1:]):
        if a.to_address != b.from_address:
            raise ValueError(f"{a.tx_id} -> {b.tx_id}: walk is not connected")
        if not a.timestamp < b.timestamp:
            raise ValueError(f"{a.tx_id} -> {b.tx_id}: timestamps not strictly increasing")
    if edges[-1].to_address != edges[0].from_address:
        raise ValueError("walk is not closed")
    addrs = [e.from_address for e in edges]
    if len(set(addrs)) != len(addrs):
        raise ValueError("cycle repeats an address")
    if not any(e.is_sale for e in edges):
        raise ValueError("cycle has no sale")


def find_cycles(
    graph: NftGraph,
    cfg: DetectorConfig = DetectorConfig(),
    stats: Optional[SearchStats] = None,
) -> list[CycleFinding]:
    """Return the edge-disjoint temporal cycles of ``graph``.

    Output is ordered by ``(start_ts, end_ts, tx_ids)``.
    """
    if stats is None:
        stats = SearchStats()
    stats.graphs += 1
    edges = graph.edges
    max_len = cfg.max_cycle_len
    used = [False] * len(edges)
    # per node: indices of incoming edges already swept, and their timestamps
    in_idx: dict[str, list[int]] = {}
    in_ts: dict[str, list[int]] = {}
    first_out: dict[str, int] = {}
    found: list[CycleFinding] = []

    def search(cur: str, bound: int, target: str, floor: int, depth: int,
               has_sale: bool, visited: set, path: list) -> bool:
        idx = in_idx.get(cur)
        if not idx:
            return False
        ts = in_ts[cur]
        k = bisect_left(ts, bound) - 1
        while k >= 0:
            j = idx[k]
            f = edges[j]
            if f.timestamp < floor:
                return False
            k -= 1
            if used[j]:
                continue
            w = f.from_address
            sale = has_sale or f.kind is Kind.SALE
            if depth + 1 > max_len:
                stats.truncated += 1
                return False
            if w == target:
                if sale:
                    path.append(j)
                    return True
                continue
            if w in visited:
                continue
            visited.add(w)
            path.append(j)
            if search(w, f.timestamp, target, floor, depth + 1, sale, visited, path):
                return True
            path.pop()
            visited.discard(w)
        return False

    for j, e in enumerate(edges):
        u, v = e.from_address, e.to_address
        closed: Optional[list[int]] = None
        if u == v:
            if e.is_sale:
                closed = [j]
        else:
            fo = first_out.get(v)
            if fo is not None and fo < e.timestamp and max_len >= 2:
                path = [j]
                if search(u, e.timestamp, v, fo, 1, e.is_sale, {u, v}, path):
                    # path is [closing edge, then predecessors walking backwards]
                    closed = path[:0:-1] + [j]
            elif fo is not None and fo < e.timestamp:
                stats.truncated += 1
        if closed is not None:
            for i in closed:
                used[i] = True
            found.append(CycleFinding(graph.nft, tuple(edges[i] for i in closed)))
        in_idx.setdefault(v, []).append(j)
        in_ts.setdefault(v, []).append(e.timestamp)
        first_out.setdefault(u, e.timestamp)

    found.sort(key=lambda c: (c.start_ts, c.end_ts, c.tx_ids))
    return found

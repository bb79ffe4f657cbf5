"""Rapid, low-risk sale paths on a single NFT graph.

A qualifying sequence is a simple path of sales (no address twice) whose
timestamps strictly increase, whose total elapsed time stays strictly below
``velocity_window`` and where every sale price lies within
``max_price_deviation`` of the first sale price (inclusive). Only sequences
that are not a contiguous piece of a longer qualifying sequence are reported.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from decimal import Decimal
from typing import AbstractSet, Optional, Sequence

from .config import DetectorConfig
from .events import NftId
from .graph import Edge, NftGraph


@dataclass(frozen=True)
class SequenceFinding:
    nft: NftId
    edges: tuple[Edge, ...]
    length: int = field(init=False)
    addresses: tuple[str, ...] = field(init=False)
    start_ts: int = field(init=False)
    end_ts: int = field(init=False)
    initial_usd: Decimal = field(init=False)
    max_deviation_fraction: Decimal = field(init=False)
    usd_volume: Decimal = field(init=False)

    def __post_init__(self):
        edges = tuple(self.edges)
        if not edges:
            raise ValueError("empty sequence")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "length", len(edges))
        object.__setattr__(self, "addresses", (edges[0].from_address,) + tuple(e.to_address for e in edges))
        object.__setattr__(self, "start_ts", edges[0].timestamp)
        object.__setattr__(self, "end_ts", edges[-1].timestamp)
        p0 = edges[0].usd_weight
        object.__setattr__(self, "initial_usd", p0)
        dev = max(abs(e.usd_weight - p0) for e in edges)
        object.__setattr__(self, "max_deviation_fraction", dev / p0 if p0 else Decimal(0))
        object.__setattr__(self, "usd_volume", sum((e.usd_weight for e in edges), Decimal(0)))

    @property
    def tx_ids(self) -> tuple[str, ...]:
        return tuple(e.tx_id for e in self.edges)

    @property
    def elapsed(self) -> int:
        return self.end_ts - self.start_ts


def within_deviation(price: Decimal, initial: Decimal, max_dev: Decimal) -> bool:
    # multiply rather than divide so the 5% boundary is compared exactly
    return abs(price - initial) <= max_dev * initial


def check_sequence(edges: Sequence[Edge], cfg: DetectorConfig = DetectorConfig()) -> None:
    """Raise ``ValueError`` unless ``edges`` satisfy every sequence rule."""
    if len(edges) < cfg.min_sequence_len:
        raise ValueError("sequence shorter than min_sequence_len")
    if not all(e.is_sale for e in edges):
        raise ValueError("sequence contains a transfer")
    for a, b in zip(edges, edges[1:]):
        if a.to_address != b.from_address:
            raise ValueError(f"{a.tx_id} -> {b.tx_id}: path is not connected")
        if not a.timestamp < b.timestamp:
            raise ValueError(f"{a.tx_id} -> {b.tx_id}: timestamps not strictly increasing")
    addrs = [edges[0].from_address] + [e.to_address for e in edges]
    if len(set(addrs)) != len(addrs):
        raise ValueError("sequence repeats an address")
    if not edges[-1].timestamp - edges[0].timestamp < cfg.velocity_window:
        raise ValueError("sequence exceeds velocity window")
    p0 = edges[0].usd_weight
    for e in edges:
        if not within_deviation(e.usd_weight, p0, cfg.max_price_deviation):
            raise ValueError(f"{e.tx_id}: price deviates more than allowed")


def _drop_contained(paths: list[tuple[int, ...]]) -> list[tuple[int, ...]]:
    inner = set()
    for p in paths:
        n = len(p)
        for i in range(n):
            for j in range(i + 1, n + 1):
                if j - i < n:
                    inner.add(p[i:j])
    return [p for p in paths if p not in inner]


def find_sequences(
    graph: NftGraph,
    cfg: DetectorConfig = DetectorConfig(),
    exclude: Optional[AbstractSet[str]] = None,
) -> list[SequenceFinding]:
    """Return the maximal rapid low-risk sale sequences of ``graph``.

    Sales whose ``tx_id`` is in ``exclude`` are ignored. When ``exclude`` is
    ``None`` the edges of the graph's cycles (see
    :func:`nftwash.cycles.find_cycles`) are excluded, so a round trip is never
    reported as both a cycle and a sequence.
    """
    if exclude is None:
        from .cycles import find_cycles

        exclude = {tx for c in find_cycles(graph, cfg) for tx in c.tx_ids}
    edges = graph.edges
    window = cfg.velocity_window
    max_dev = cfg.max_price_deviation
    min_len = cfg.min_sequence_len

    out_idx: dict[str, list[int]] = {}
    out_ts: dict[str, list[int]] = {}
    eligible = []
    for j, e in enumerate(edges):
        if e.is_sale and e.tx_id not in exclude:
            eligible.append(j)
            out_idx.setdefault(e.from_address, []).append(j)
            out_ts.setdefault(e.from_address, []).append(e.timestamp)

    leaves: list[tuple[int, ...]] = []

    def extend(path: list[int], visited: set, t0: int, p0: Decimal) -> None:
        last = edges[path[-1]]
        idx = out_idx.get(last.to_address)
        grew = False
        if idx:
            ts = out_ts[last.to_address]
            for k in range(bisect_right(ts, last.timestamp), len(idx)):
                f = edges[idx[k]]
                if f.timestamp - t0 >= window:
                    break
                if f.to_address in visited or not within_deviation(f.usd_weight, p0, max_dev):
                    continue
                grew = True
                visited.add(f.to_address)
                path.append(idx[k])
                extend(path, visited, t0, p0)
                path.pop()
                visited.discard(f.to_address)
        if not grew and len(path) >= min_len:
            leaves.append(tuple(path))

    for j in eligible:
        e = edges[j]
        if e.from_address == e.to_address:
            continue
        extend([j], {e.from_address, e.to_address}, e.timestamp, e.usd_weight)

    found = [SequenceFinding(graph.nft, tuple(edges[i] for i in p)) for p in _drop_contained(leaves)]
    found.sort(key=lambda s: (s.start_ts, s.tx_ids))
    return found

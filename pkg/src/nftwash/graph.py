"""Per-NFT directed transaction multigraphs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Iterator, Mapping, NamedTuple, Optional, TextIO

from .events import Kind, NftId, TradeEvent

ZERO = Decimal(0)


class Edge(NamedTuple):
    """One transaction; ``usd_weight`` is zero for transfers."""

    tx_id: str
    from_address: str
    to_address: str
    timestamp: int
    kind: Kind
    usd_weight: Decimal = ZERO

    @property
    def is_sale(self) -> bool:
        return self.kind is Kind.SALE

    @property
    def key(self) -> tuple[int, str]:
        return (self.timestamp, self.tx_id)

    @classmethod
    def from_event(cls, ev: TradeEvent) -> "Edge":
        if ev.kind is Kind.SALE:
            if ev.usd_price is None:
                raise ValueError(f"sale {ev.tx_id} has no resolved usd_price")
            weight = ev.usd_price
        else:
            weight = ZERO
        return cls(ev.tx_id, ev.from_address, ev.to_address, ev.timestamp, ev.kind, weight)


def sale(tx_id: str, src: str, dst: str, ts: int, usd="100") -> Edge:
    """Shorthand for hand-built fixtures."""
    return Edge(tx_id, src, dst, ts, Kind.SALE, Decimal(usd))


def transfer(tx_id: str, src: str, dst: str, ts: int) -> Edge:
    return Edge(tx_id, src, dst, ts, Kind.TRANSFER, ZERO)


@dataclass(frozen=True)
class NftGraph:
    """All transactions of one NFT as a directed multigraph.

    Nodes are addresses; every transaction is one edge pointing from sender to
    receiver. Edges are kept sorted by ``(timestamp, tx_id)``.
    """

    nft: NftId
    edges: tuple[Edge, ...]
    collection: str = ""
    nodes: frozenset = field(init=False)

    def __post_init__(self):
        edges = tuple(sorted(self.edges, key=lambda e: (e.timestamp, e.tx_id)))
        object.__setattr__(self, "edges", edges)
        nodes = set()
        for e in edges:
            if e.usd_weight < 0 or (e.kind is Kind.SALE and e.usd_weight <= 0):
                raise ValueError(f"edge {e.tx_id}: bad usd weight {e.usd_weight}")
            nodes.add(e.from_address)
            nodes.add(e.to_address)
        object.__setattr__(self, "nodes", frozenset(nodes))

    @classmethod
    def of(cls, edges: Iterable[Edge], nft: Optional[NftId] = None, collection: str = "") -> "NftGraph":
        return cls(nft or NftId("0" * 40, 0), tuple(edges), collection)

    def __len__(self) -> int:
        return len(self.edges)

    def to_record(self) -> dict:
        return {
            "nft": str(self.nft),
            "collection": self.collection,
            "nodes": len(self.nodes),
            "edges": [
                [e.tx_id, e.from_address, e.to_address, e.timestamp, e.kind.value, str(e.usd_weight)]
                for e in self.edges
            ],
        }


@dataclass
class GraphSet:
    graphs: dict[NftId, NftGraph]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self) -> Iterator[NftGraph]:
        return iter(self.graphs.values())

    def __getitem__(self, nft: NftId) -> NftGraph:
        return self.graphs[nft]

    @property
    def edge_count(self) -> int:
        return sum(len(g.edges) for g in self.graphs.values())

    def collections(self) -> Mapping[NftId, str]:
        return {nft: g.collection for nft, g in self.graphs.items()}

    def dump(self, fh: TextIO) -> None:
        for g in self.graphs.values():
            fh.write(json.dumps(g.to_record(), separators=(",", ":")) + "\n")


def build_graphs(events: Iterable[TradeEvent], provenance: str = "") -> GraphSet:
    """Group events by NFT into one multigraph each.

    Graphs are keyed in ``NftId`` order. The collection of an NFT is taken
    from its earliest event.
    """
    buckets: dict[NftId, list[TradeEvent]] = {}
    for ev in events:
        bucket = buckets.get(ev.nft)
        if bucket is None:
            buckets[ev.nft] = [ev]
        else:
            bucket.append(ev)
    graphs = {}
    for nft in sorted(buckets):
        evs = buckets[nft]
        first = min(evs, key=lambda e: (e.timestamp, e.tx_id))
        graphs[nft] = NftGraph(nft, tuple(Edge.from_event(e) for e in evs), first.collection)
    return GraphSet(graphs, provenance)

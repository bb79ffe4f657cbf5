"""Labelled synthetic NFT market traces.

Organic activity walks each NFT through owners that never repeat, so it can
contain neither cycles nor (given ``organic_gap`` at least the velocity
window) rapid sequences. Wash-trading patterns are then planted at known
positions, either inside or deliberately outside the detector thresholds, and
their transaction ids are written to a labels file.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Optional, TextIO

from .config import DAY, HOUR
from .events import Kind, NftId, TradeEvent, write_events

CENT = Decimal("0.01")
MINT_ADDRESS = "0x" + "0" * 40
DEFAULT_START = 1_609_459_200  # 2021-01-01T00:00:00Z


class SynthError(ValueError):
    pass


class Pattern(str, Enum):
    SELF_LOOP = "self_loop"
    CYCLE2 = "cycle2"
    CYCLE3 = "cycle3"
    CYCLE_K = "cycle_k"
    RAPID_SEQUENCE = "rapid_sequence"

    def __str__(self) -> str:
        return self.value


CYCLIC = frozenset({Pattern.SELF_LOOP, Pattern.CYCLE2, Pattern.CYCLE3, Pattern.CYCLE_K})


@dataclass(frozen=True)
class PlantSpec:
    """``count`` copies of one pattern.

    ``size`` is the edge count for ``cycle_k`` (at least 4) and for
    ``rapid_sequence`` (at least 2). ``window`` bounds the time from first to
    last planted edge. ``within=False`` makes a sequence that breaks the
    thresholds: ``outside="price"`` moves each hop by twice the allowed
    deviation, ``outside="slow"`` spaces hops a full velocity window apart.
    ``mixed`` turns the closing edge of a cycle into a transfer.
    """

    pattern: Pattern
    count: int = 1
    size: Optional[int] = None
    window: int = 6 * HOUR
    within: bool = True
    outside: str = "price"
    mixed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pattern", Pattern(self.pattern))
        if self.count < 0:
            raise SynthError("plant count must be >= 0")
        if self.pattern is Pattern.CYCLE_K and (self.size is None or self.size < 4):
            raise SynthError("cycle_k needs size >= 4")
        if self.pattern is Pattern.RAPID_SEQUENCE and (self.size is None or self.size < 2):
            raise SynthError("rapid_sequence needs size >= 2")
        if self.pattern in CYCLIC and not self.within:
            raise SynthError(f"{self.pattern}: cycles are flagged regardless of price or timing; "
                             "only rapid_sequence can be planted outside the thresholds")
        if self.outside not in ("price", "slow"):
            raise SynthError("outside must be 'price' or 'slow'")
        if self.pattern is Pattern.SELF_LOOP and self.mixed:
            raise SynthError("a self loop has a single edge, which must be a sale")

    @property
    def edge_count(self) -> int:
        return {Pattern.SELF_LOOP: 1, Pattern.CYCLE2: 2, Pattern.CYCLE3: 3}.get(self.pattern) or self.size

    @property
    def label(self) -> str:
        return self.pattern.value if self.within else f"decoy_{self.pattern.value}"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_collections: int = 3
    n_nfts: int = 100
    n_organic_traders: int = 500
    organic_trade_rate: int = 5
    transfer_share: float = 0.1
    start_price: Decimal = Decimal("100")
    drift: float = 0.01
    noise: float = 0.03
    organic_gap: int = DAY
    organic_gap_max: int = 7 * DAY
    velocity_window: int = 12 * HOUR
    max_price_deviation: Decimal = Decimal("0.05")
    start_ts: int = DEFAULT_START
    planted: tuple[PlantSpec, ...] = ()

    def __post_init__(self):
        for name in ("n_collections", "n_nfts", "n_organic_traders", "organic_trade_rate"):
            if getattr(self, name) < 0:
                raise SynthError(f"{name} must be >= 0")
        if self.n_nfts and not self.n_collections:
            raise SynthError("n_collections must be >= 1 when n_nfts > 0")
        if self.organic_gap < self.velocity_window:
            raise SynthError("organic_gap must be at least velocity_window or organic trades could look rapid")
        if self.organic_gap_max < self.organic_gap:
            raise SynthError("organic_gap_max must be >= organic_gap")
        object.__setattr__(self, "start_price", Decimal(str(self.start_price)))
        object.__setattr__(self, "max_price_deviation", Decimal(str(self.max_price_deviation)))
        object.__setattr__(self, "planted", tuple(
            p if isinstance(p, PlantSpec) else PlantSpec(**p) for p in self.planted))
        if any(p.count for p in self.planted) and not self.n_nfts:
            raise SynthError("plants need at least one NFT")
        need = 2 * self.organic_trade_rate
        if self.n_nfts and self.n_organic_traders < need:
            raise SynthError(f"n_organic_traders must be >= {need} so owners never repeat")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start_price"] = str(self.start_price)
        d["max_price_deviation"] = str(self.max_price_deviation)
        d["planted"] = [{**asdict(p), "pattern": p.pattern.value} for p in self.planted]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        d["planted"] = tuple(PlantSpec(**p) for p in d.get("planted", ()))
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Label:
    tx_id: str
    pattern_class: str
    plant_id: int


@dataclass
class SynthTrace:
    events: list[TradeEvent]
    labels: list[Label] = field(default_factory=list)

    def flagged_tx_ids(self) -> set[str]:
        """tx ids the detectors are expected to flag (within-threshold plants)."""
        return {lab.tx_id for lab in self.labels if not lab.pattern_class.startswith("decoy_")}

    def decoy_tx_ids(self) -> set[str]:
        return {lab.tx_id for lab in self.labels if lab.pattern_class.startswith("decoy_")}

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ev_path, lab_path = out / "events.jsonl", out / "labels.csv"
        with open(ev_path, "w", encoding="utf-8", newline="\n") as fh:
            write_events(self.events, fh)
        with open(lab_path, "w", encoding="utf-8", newline="") as fh:
            write_labels(self.labels, fh)
        return ev_path, lab_path


def write_labels(labels, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["tx_id", "pattern_class", "plant_id"])
    for lab in labels:
        w.writerow([lab.tx_id, lab.pattern_class, lab.plant_id])


def read_labels(path) -> list[Label]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [Label(r["tx_id"], r["pattern_class"], int(r["plant_id"])) for r in csv.DictReader(fh)]


class _Gen:
    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.events: list[TradeEvent] = []
        self.labels: list[Label] = []

    def addr(self) -> str:
        return f"0x{self.rng.getrandbits(160):040x}"

    def tx(self) -> str:
        return f"0x{self.rng.getrandbits(256):064x}:0"

    def emit(self, nft, coll, kind, ts, src, dst, usd=None) -> str:
        tx = self.tx()
        self.events.append(TradeEvent(
            nft=nft, kind=kind, tx_id=tx, timestamp=ts, from_address=src, to_address=dst,
            collection=coll, usd_price=usd, marketplace="synthetic" if kind is Kind.SALE else None,
        ))
        return tx

    def step_price(self, p: Decimal) -> Decimal:
        c = self.cfg
        factor = 1 + c.drift + c.noise * (2 * self.rng.random() - 1)
        return max(CENT, (p * Decimal(repr(factor))).quantize(CENT, rounding=ROUND_HALF_UP))

    def plant(self, spec: PlantSpec, plant_id: int, nft, coll, t: int, owner: str, price: Decimal):
        """Emit one planted pattern starting at ``t``; return (end_ts, new owner)."""
        c = self.cfg
        n = spec.edge_count
        slow = spec.pattern is Pattern.RAPID_SEQUENCE and not spec.within and spec.outside == "slow"
        if slow:
            times = [t + i * c.velocity_window for i in range(n)]
        else:
            window = spec.window
            if spec.pattern is Pattern.RAPID_SEQUENCE and spec.within:
                window = min(window, c.velocity_window - 1)
            if n > 1 and window < n - 1:
                raise SynthError(f"plant {plant_id} ({spec.pattern}): window of {window}s cannot hold "
                                 f"{n} strictly increasing timestamps at 1s resolution")
            step = window // (n - 1) if n > 1 else 0
            times = [t + i * step for i in range(n)]

        tag = spec.label
        if spec.pattern in CYCLIC:
            if spec.pattern is Pattern.SELF_LOOP:
                hops = [owner, owner]
            else:
                hops = [owner] + [self.addr() for _ in range(n - 1)] + [owner]
            for i in range(n):
                closing = i == n - 1
                if spec.mixed and closing:
                    tx = self.emit(nft, coll, Kind.TRANSFER, times[i], hops[i], hops[i + 1])
                else:
                    tx = self.emit(nft, coll, Kind.SALE, times[i], hops[i], hops[i + 1], price)
                self.labels.append(Label(tx, tag, plant_id))
            return times[-1], owner

        hops = [owner] + [self.addr() for _ in range(n)]
        max_dev = c.max_price_deviation
        p = price
        for i in range(n):
            if i == 0:
                p = price
            elif spec.within:
                # stay inside 80% of the allowed band around the first price
                u = Decimal(repr(2 * self.rng.random() - 1)) * max_dev * Decimal("0.8")
                p = (price * (1 + u)).quantize(CENT, rounding=ROUND_HALF_UP)
            elif spec.outside == "price":
                p = (p * (1 + 2 * max_dev)).quantize(CENT, rounding=ROUND_HALF_UP)
            tx = self.emit(nft, coll, Kind.SALE, times[i], hops[i], hops[i + 1], p)
            self.labels.append(Label(tx, tag, plant_id))
        return times[-1], hops[-1]

    def run(self) -> SynthTrace:
        c, rng = self.cfg, self.rng
        colls = [f"collection-{i:02d}" for i in range(c.n_collections)]
        contracts = [f"{rng.getrandbits(160):040x}" for _ in colls]
        traders = [self.addr() for _ in range(c.n_organic_traders)]
        coll_start = [c.start_ts + rng.randrange(30 * DAY) for _ in colls]

        plants_by_nft: dict[int, list[tuple[int, PlantSpec]]] = {}
        pid = 0
        for spec in c.planted:
            for _ in range(spec.count):
                plants_by_nft.setdefault(rng.randrange(c.n_nfts), []).append((pid, spec))
                pid += 1

        for i in range(c.n_nfts):
            ci = i % max(1, c.n_collections)
            nft = NftId(contracts[ci], i // max(1, c.n_collections))
            coll = colls[ci]
            rate = c.organic_trade_rate
            n_org = rng.randint(1, 2 * rate - 1) if rate >= 1 else 0
            owners = rng.sample(traders, n_org + 1) if n_org else [rng.choice(traders)] if traders else [self.addr()]
            steps: list = ["organic"] * n_org + plants_by_nft.get(i, [])
            rng.shuffle(steps)

            t = coll_start[ci] + rng.randrange(DAY)
            owner = owners[0]
            self.emit(nft, coll, Kind.TRANSFER, t, MINT_ADDRESS, owner)
            price = c.start_price
            k = 1
            for step in steps:
                t += rng.randint(c.organic_gap, c.organic_gap_max)
                if step == "organic":
                    nxt = owners[k]
                    k += 1
                    if rng.random() < c.transfer_share:
                        self.emit(nft, coll, Kind.TRANSFER, t, owner, nxt)
                    else:
                        price = self.step_price(price)
                        self.emit(nft, coll, Kind.SALE, t, owner, nxt, price)
                    owner = nxt
                else:
                    plant_id, spec = step
                    t, owner = self.plant(spec, plant_id, nft, coll, t, owner, price)

        self.events.sort(key=lambda e: (e.timestamp, e.tx_id))
        self.labels.sort(key=lambda lab: lab.plant_id)
        return SynthTrace(self.events, self.labels)


def generate(cfg: SynthConfig) -> SynthTrace:
    """Build a deterministic trace for ``cfg`` (same seed, same bytes)."""
    return _Gen(cfg).run()

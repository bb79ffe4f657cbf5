"""Trade event schema, line-delimited parsing and dataset cleaning.

Each input line is one JSON object describing a single ``sale`` or
``transfer`` of one ERC721 token. The field set is fixed; see
``docs/event-schema.md``.
"""

from __future__ import annotations

import csv
import gc
import json
import logging
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Iterator, Optional, TextIO

from .config import DetectorConfig

if TYPE_CHECKING:  # pragma: no cover
    from .prices import PriceTable

log = logging.getLogger(__name__)

_HEX40 = re.compile(r"^(0x)?[0-9a-fA-F]{40}$")

REQUIRED_FIELDS = ("contract", "token", "kind", "tx_id", "timestamp", "from", "to", "collection")
OPTIONAL_FIELDS = ("payment_token", "payment_amount", "usd_price", "marketplace")
FIELD_ORDER = (
    "contract", "token", "kind", "tx_id", "timestamp", "from", "to",
    "payment_token", "payment_amount", "usd_price", "collection", "marketplace",
)
_ALL_FIELDS = frozenset(FIELD_ORDER)
_DECODER = json.JSONDecoder(parse_float=Decimal)


class Kind(str, Enum):
    SALE = "sale"
    TRANSFER = "transfer"

    def __str__(self) -> str:
        return self.value


class DropReason(str, Enum):
    MALFORMED = "malformed"
    EXOTIC_ASSET = "exotic_asset"
    ZERO_PRICE = "zero_price"
    DUPLICATE = "duplicate"

    def __str__(self) -> str:
        return self.value


class MalformedEvent(ValueError):
    pass


_ADDR_CACHE: dict[str, str] = {}


def normalize_address(addr: str) -> str:
    """Lower-case 20-byte hex addresses and give them a ``0x`` prefix.

    Anything that is not a hex address is kept verbatim, which lets tests
    and fixtures use short symbolic names.
    """
    out = _ADDR_CACHE.get(addr)
    if out is None:
        out = "0x" + addr[-40:].lower() if _HEX40.match(addr) else addr
        if len(_ADDR_CACHE) < 1 << 20:
            _ADDR_CACHE[addr] = out
    return out


@dataclass(frozen=True, order=True)
class NftId:
    contract: str
    token: int

    def __post_init__(self):
        if not isinstance(self.contract, str) or not _HEX40.match(self.contract):
            raise ValueError(f"contract must be 40 hex characters, got {self.contract!r}")
        if isinstance(self.token, bool) or not isinstance(self.token, int) or self.token < 0:
            raise ValueError(f"token id must be a non-negative integer, got {self.token!r}")
        object.__setattr__(self, "contract", "0x" + self.contract[-40:].lower())

    def __str__(self) -> str:
        return f"{self.contract}/{self.token}"

    @classmethod
    def parse(cls, text: str) -> "NftId":
        contract, _, token = text.partition("/")
        return cls(contract, int(token))


@dataclass(frozen=True)
class TradeEvent:
    nft: NftId
    kind: Kind
    tx_id: str
    timestamp: int
    from_address: str
    to_address: str
    collection: str
    payment_token: Optional[str] = None
    payment_amount: Optional[Decimal] = None
    usd_price: Optional[Decimal] = None
    marketplace: Optional[str] = None

    @property
    def is_sale(self) -> bool:
        return self.kind is Kind.SALE

    @property
    def sort_key(self) -> tuple[int, str]:
        return (self.timestamp, self.tx_id)

    def to_record(self) -> dict:
        rec = {
            "contract": self.nft.contract,
            "token": str(self.nft.token),
            "kind": self.kind.value,
            "tx_id": self.tx_id,
            "timestamp": self.timestamp,
            "from": self.from_address,
            "to": self.to_address,
        }
        if self.payment_token is not None:
            rec["payment_token"] = self.payment_token
        if self.payment_amount is not None:
            rec["payment_amount"] = str(self.payment_amount)
        if self.usd_price is not None:
            rec["usd_price"] = str(self.usd_price)
        rec["collection"] = self.collection
        if self.marketplace is not None:
            rec["marketplace"] = self.marketplace
        return rec


@dataclass(frozen=True)
class DroppedEvent:
    tx_id: str
    reason: DropReason
    line: Optional[int] = None


@dataclass
class CleaningReport:
    kept: int = 0
    dropped: list[DroppedEvent] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.kept + len(self.dropped)

    def counts(self) -> dict[str, int]:
        out = {r.value: 0 for r in DropReason}
        for d in self.dropped:
            out[d.reason.value] += 1
        return out

    def merge(self, other: "CleaningReport") -> "CleaningReport":
        return CleaningReport(self.kept + other.kept, self.dropped + other.dropped)

    def write_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tx_id", "reason", "line"])
        for d in self.dropped:
            w.writerow([d.tx_id, d.reason.value, "" if d.line is None else d.line])


def _decimal(value, name: str) -> Optional[Decimal]:
    if value is None:
        return None
    t = type(value)
    if t is not str and t is not int and t is not Decimal:
        raise MalformedEvent(f"{name} must be a decimal string or number")
    try:
        d = value if t is Decimal else Decimal(value)
    except InvalidOperation:
        raise MalformedEvent(f"{name} is not a decimal: {value!r}") from None
    if not d.is_finite() or d < 0:
        raise MalformedEvent(f"{name} must be finite and non-negative")
    return d


_KINDS = {"sale": Kind.SALE, "transfer": Kind.TRANSFER}


def _int(value, name: str, minimum: int) -> int:
    if type(value) is str and value.isdigit():
        value = int(value)
    if type(value) is not int or value < minimum:
        raise MalformedEvent(f"{name} must be an integer >= {minimum}")
    return value


def _optional_text(value, name: str) -> Optional[str]:
    if value is not None and type(value) is not str:
        raise MalformedEvent(f"{name} must be a string")
    return value


def event_from_record(rec: dict, _nft_cache: Optional[dict] = None) -> TradeEvent:
    """Validate one decoded record and build a ``TradeEvent``."""
    if type(rec) is not dict:
        raise MalformedEvent("record is not an object")
    if not rec.keys() <= _ALL_FIELDS:
        raise MalformedEvent(f"unknown fields {sorted(rec.keys() - _ALL_FIELDS)}")
    try:
        contract = rec["contract"]
        token = rec["token"]
        kind = rec["kind"]
        tx_id = rec["tx_id"]
        ts = rec["timestamp"]
        src = rec["from"]
        dst = rec["to"]
        collection = rec["collection"]
    except KeyError as exc:
        raise MalformedEvent(f"missing field {exc.args[0]!r}") from None
    for name, value in (("contract", contract), ("tx_id", tx_id), ("from", src),
                        ("to", dst), ("collection", collection)):
        if type(value) is not str or not value:
            raise MalformedEvent(f"{name} must be a non-empty string")

    token = _int(token, "token", 0)
    key = (contract, token)
    nft = _nft_cache.get(key) if _nft_cache is not None else None
    if nft is None:
        try:
            nft = NftId(contract, token)
        except ValueError as exc:
            raise MalformedEvent(str(exc)) from None
        if _nft_cache is not None:
            _nft_cache[key] = nft

    kind = _KINDS.get(kind) if type(kind) is str else None
    if kind is None:
        raise MalformedEvent(f"kind must be 'sale' or 'transfer', got {rec['kind']!r}")
    ts = _int(ts, "timestamp", 1)

    payment_token = _optional_text(rec.get("payment_token"), "payment_token")
    if payment_token is not None:
        payment_token = payment_token.strip().upper()
    amount = _decimal(rec.get("payment_amount"), "payment_amount")
    usd = _decimal(rec.get("usd_price"), "usd_price")
    marketplace = _optional_text(rec.get("marketplace"), "marketplace")

    if kind is Kind.SALE and usd is None and (payment_token is None or amount is None):
        raise MalformedEvent("sale needs usd_price or payment_token and payment_amount")

    return TradeEvent(
        nft, kind, tx_id, ts, normalize_address(src), normalize_address(dst), collection,
        payment_token, amount, usd, marketplace,
    )


def parse_events(stream: Iterable[str], first_line: int = 1) -> tuple[list[TradeEvent], CleaningReport]:
    """Parse line-delimited JSON events.

    Bad lines are recorded as ``malformed`` and never abort the run. Blank
    lines are skipped. Output order follows input order.
    """
    events: list[TradeEvent] = []
    report = CleaningReport()
    cache: dict = {}
    decode = _DECODER.decode
    gc_was_enabled = gc.isenabled()
    gc.disable()  # millions of small acyclic objects; collection passes only cost time
    try:
        _parse_into(stream, first_line, events, report, cache, decode)
    finally:
        if gc_was_enabled:
            gc.enable()
    report.kept = len(events)
    return events, report


def _parse_into(stream, first_line, events, report, cache, decode) -> None:
    for lineno, line in enumerate(stream, start=first_line):
        if not line.strip():
            continue
        rec = None
        try:
            rec = decode(line)
            ev = event_from_record(rec, cache)
        except (ValueError, MalformedEvent) as exc:
            tx = rec.get("tx_id") if isinstance(rec, dict) else None
            if not isinstance(tx, str) or not tx:
                tx = f"<line {lineno}>"
            log.debug("line %d dropped: %s", lineno, exc)
            report.dropped.append(DroppedEvent(tx, DropReason.MALFORMED, lineno))
            continue
        events.append(ev)


def read_events(path) -> tuple[list[TradeEvent], CleaningReport]:
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh)


def serialize_event(ev: TradeEvent) -> str:
    return json.dumps(ev.to_record(), separators=(",", ":"))


def iter_lines(events: Iterable[TradeEvent]) -> Iterator[str]:
    for ev in events:
        yield serialize_event(ev) + "\n"


def write_events(events: Iterable[TradeEvent], fh: TextIO) -> None:
    fh.writelines(iter_lines(events))


def clean(
    events: Iterable[TradeEvent],
    cfg: DetectorConfig = DetectorConfig(),
    prices: Optional["PriceTable"] = None,
) -> tuple[list[TradeEvent], CleaningReport]:
    """Drop duplicates, unpriceable sales and (optionally) zero-price sales.

    A sale counts as priced when it carries ``usd_price`` or when ``prices``
    can resolve its settlement amount. The result is sorted by
    ``(timestamp, tx_id)``; among duplicate ``tx_id`` the first after a stable
    sort is kept.
    """
    ordered = sorted(events, key=lambda e: (e.timestamp, e.tx_id))
    report = CleaningReport()
    kept: list[TradeEvent] = []
    seen: set[str] = set()
    for ev in ordered:
        if ev.tx_id in seen:
            report.dropped.append(DroppedEvent(ev.tx_id, DropReason.DUPLICATE))
            continue
        seen.add(ev.tx_id)
        if ev.kind is Kind.SALE:
            price = ev.usd_price
            if price is None and prices is not None:
                price = prices.resolve(ev)
            if price is None:
                report.dropped.append(DroppedEvent(ev.tx_id, DropReason.EXOTIC_ASSET))
                continue
            if price == 0 and cfg.drop_zero_price:
                report.dropped.append(DroppedEvent(ev.tx_id, DropReason.ZERO_PRICE))
                continue
        kept.append(ev)
    report.kept = len(kept)
    return kept, report


def with_usd(ev: TradeEvent, usd: Decimal) -> TradeEvent:
    return replace(ev, usd_price=usd)

"""Historical daily USD quotes and sale enrichment."""

from __future__ import annotations

import csv
import logging
from bisect import bisect_right
from dataclasses import dataclass
from datetime import date, datetime, timezone
from decimal import Decimal, InvalidOperation
from typing import Iterable, Optional, TextIO

from .events import Kind, TradeEvent, with_usd

log = logging.getLogger(__name__)

STALE_AFTER_DAYS = 7
HEADER = ("token", "date", "usd_per_unit")


class PriceTableError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"price table line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class PriceQuote:
    token: str
    date: date
    usd_per_unit: Decimal


def utc_day(ts: int) -> date:
    return datetime.fromtimestamp(ts, tz=timezone.utc).date()


class PriceTable:
    """Per-token daily quotes with nearest-preceding-day lookup."""

    def __init__(self, quotes: Iterable[PriceQuote] = ()):
        by_token: dict[str, list[PriceQuote]] = {}
        for q in quotes:
            if q.usd_per_unit <= 0:
                raise ValueError(f"non-positive quote for {q.token} on {q.date}")
            by_token.setdefault(q.token, []).append(q)
        self._days: dict[str, list[int]] = {}
        self._quotes: dict[str, list[PriceQuote]] = {}
        for token, qs in by_token.items():
            qs.sort(key=lambda q: q.date)
            days = [q.date.toordinal() for q in qs]
            for a, b in zip(days, days[1:]):
                if a == b:
                    raise ValueError(f"duplicate quote for {token} on {date.fromordinal(a)}")
            self._days[token] = days
            self._quotes[token] = qs
        self._warned: set[tuple[str, int]] = set()

    def __len__(self) -> int:
        return sum(len(v) for v in self._quotes.values())

    def __contains__(self, token: str) -> bool:
        return token in self._quotes

    @property
    def tokens(self) -> list[str]:
        return sorted(self._quotes)

    def quotes(self, token: str) -> list[PriceQuote]:
        return list(self._quotes.get(token, ()))

    def lookup(self, token: str, ts: int) -> Optional[PriceQuote]:
        """Latest quote dated on or before the UTC day of ``ts``."""
        days = self._days.get(token)
        if not days:
            return None
        day = utc_day(ts).toordinal()
        i = bisect_right(days, day)
        if i == 0:
            return None
        quote = self._quotes[token][i - 1]
        gap = day - days[i - 1]
        if gap > STALE_AFTER_DAYS and (token, days[i - 1]) not in self._warned:
            self._warned.add((token, days[i - 1]))
            log.warning("stale %s quote: %s used %d days later", token, quote.date, gap)
        return quote

    def resolve(self, ev: TradeEvent) -> Optional[Decimal]:
        """USD value of a sale's settlement, or ``None`` when unpriceable."""
        if ev.usd_price is not None:
            return ev.usd_price
        if ev.payment_token is None or ev.payment_amount is None:
            return None
        quote = self.lookup(ev.payment_token, ev.timestamp)
        if quote is None:
            return None
        return ev.payment_amount * quote.usd_per_unit


def load_price_table(stream: Iterable[str]) -> PriceTable:
    """Read ``token,date,usd_per_unit`` rows. An optional header row is skipped.

    Malformed rows and duplicate ``(token, date)`` keys raise
    :class:`PriceTableError` carrying the offending line number.
    """
    quotes: list[PriceQuote] = []
    seen: dict[tuple[str, date], int] = {}
    for lineno, row in enumerate(csv.reader(stream), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        cells = [c.strip() for c in row]
        if lineno == 1 and tuple(c.lower() for c in cells) == HEADER:
            continue
        if len(cells) != 3:
            raise PriceTableError(lineno, f"expected 3 columns, got {len(cells)}")
        token, day_s, rate_s = cells
        if not token:
            raise PriceTableError(lineno, "empty token")
        try:
            day = date.fromisoformat(day_s)
        except ValueError:
            raise PriceTableError(lineno, f"bad date {day_s!r}") from None
        try:
            rate = Decimal(rate_s)
        except InvalidOperation:
            raise PriceTableError(lineno, f"bad usd_per_unit {rate_s!r}") from None
        if not rate.is_finite() or rate <= 0:
            raise PriceTableError(lineno, "usd_per_unit must be positive")
        token = token.upper()
        if (token, day) in seen:
            raise PriceTableError(lineno, f"duplicate quote for {token} on {day} (first at line {seen[token, day]})")
        seen[token, day] = lineno
        quotes.append(PriceQuote(token, day, rate))
    return PriceTable(quotes)


def read_price_table(path) -> PriceTable:
    with open(path, encoding="utf-8", newline="") as fh:
        return load_price_table(fh)


def write_price_table(table: PriceTable, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEADER)
    for token in table.tokens:
        for q in table.quotes(token):
            w.writerow([token, q.date.isoformat(), str(q.usd_per_unit)])


def enrich_usd(events: Iterable[TradeEvent], table: PriceTable) -> list[TradeEvent]:
    """Fill ``usd_price`` on sales that only carry a native settlement amount.

    Sales already priced are returned unchanged. Sales without an applicable
    quote keep ``usd_price=None``; :func:`nftwash.events.clean` drops those as
    ``exotic_asset``.
    """
    out = []
    for ev in events:
        if ev.kind is Kind.SALE and ev.usd_price is None:
            usd = table.resolve(ev)
            if usd is not None:
                ev = with_usd(ev, usd)
        out.append(ev)
    return out


def is_unresolved(ev: TradeEvent) -> bool:
    return ev.kind is Kind.SALE and ev.usd_price is None

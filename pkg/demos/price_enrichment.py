"""
Pricing crypto settlements in USD
=================================

Sales settled in ETH or stablecoins are converted with a daily price table.
Each sale uses the latest quote on or before its UTC day; a sale with no such
quote stays unpriced and is dropped as an exotic asset during cleaning.
"""

import io

from nftwash.config import DetectorConfig
from nftwash.events import clean, parse_events
from nftwash.prices import enrich_usd, load_price_table

table = load_price_table(io.StringIO(
    "token,date,usd_per_unit\n"
    "ETH,2021-01-02,1100\n"
    "ETH,2021-01-01,1000\n"
    "USDC,2021-01-01,1\n"
))

lines = "".join(
    f'{{"contract":"0x{"ab" * 20}","token":"1","kind":"sale","tx_id":"{tx}","timestamp":{ts},'
    f'"from":"0x{"11" * 20}","to":"0x{"22" * 20}","payment_token":"{tok}","payment_amount":"{amt}",'
    f'"collection":"demo"}}\n'
    for tx, ts, tok, amt in [
        ("a", 1609502400, "ETH", "1.5"),   # 2021-01-01 12:00 UTC
        ("b", 1609632000, "ETH", "1.5"),   # 2021-01-03, uses the 01-02 quote
        ("c", 1609502400, "XYZ", "900"),   # no quote for this token
        ("d", 1609502400, "USDC", "250"),
    ]
)
events, parse_report = parse_events(io.StringIO(lines))
kept, report = clean(events, DetectorConfig(), table)
for ev in enrich_usd(kept, table):
    print(ev.tx_id, ev.payment_token, ev.payment_amount, "->", ev.usd_price)
print(report.counts())

"""
Overview table arithmetic
=========================

Shares are ``100 * flagged / total`` in exact decimal arithmetic, rounded to
two places. Feeding in the published counts reproduces the published shares
to within one hundredth. Under half-up rounding the address and NFT rows land
one hundredth above the printed values; truncating fixes those two rows but
moves the volume row one hundredth below.
"""

from decimal import Decimal

from nftwash.metrics import DatasetTotals, FlagCounts, share, summarize

totals = DatasetTotals(addresses=459_954, sale_transactions=1_779_380,
                       usd_volume=Decimal("6.9e9"), nfts=3_572_483)
flags = FlagCounts(addresses=18_117, sale_transactions=36_385,
                   usd_volume=Decimal("149.5e6"), nfts=16_289)

for rounding in ("ROUND_HALF_UP", "ROUND_DOWN"):
    s = summarize(flags, totals, rounding)
    print(rounding, s.addresses.share, s.transactions.share, s.volume_usd.share, s.nfts.share)

# the unrounded ratios
print(Decimal(100 * 18_117) / 459_954, Decimal(100 * 16_289) / 3_572_483)

# a zero denominator is reported as 0 with a warning rather than failing
print(share(5, 0))

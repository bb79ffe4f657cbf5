"""
Rapid sequences without market risk
===================================

A chain of sales that passes an NFT along quickly at a nearly constant price
is suspicious even if it never returns to its origin. A chain is flagged when
it completes in under 12 hours and no price strays more than 5% from the first.
"""

from decimal import Decimal

from nftwash.config import HOUR, DetectorConfig
from nftwash.graph import NftGraph, sale
from nftwash.sequences import find_sequences


def chain(*hops):
    return NftGraph.of([sale(f"s{i}", src, dst, ts, usd) for i, (src, dst, ts, usd) in enumerate(hops)])


# three hours, three percent: flagged
g = chain(("A", "B", 0, "100"), ("B", "C", 3 * HOUR, "103"))
(f,) = find_sequences(g)
print(f.addresses, f.max_deviation_fraction, f.elapsed / HOUR, "h")

# exactly twelve hours is not "below 12 hours"
print(find_sequences(chain(("A", "B", 0, "100"), ("B", "C", 12 * HOUR, "103"))))

# five percent is allowed, six is not
print(len(find_sequences(chain(("A", "B", 0, "100"), ("B", "C", HOUR, "105")))))
print(len(find_sequences(chain(("A", "B", 0, "100"), ("B", "C", HOUR, "106")))))

###############################################################################
# Only maximal chains are reported, so a long chain is counted once.

g = chain(*[(a, b, i * HOUR, "100") for i, (a, b) in enumerate(zip("ABCDE", "BCDEF"))])
print([s.tx_ids for s in find_sequences(g)])

# Tighter thresholds can only remove flags.
tight = DetectorConfig(velocity_window=2 * HOUR + 1, max_price_deviation=Decimal("0.01"))
print([s.tx_ids for s in find_sequences(g, tight)])

"""
Closed cycles in single-NFT graphs
==================================

Each NFT's history is a directed multigraph: addresses are nodes and every
sale or transfer is an edge from seller to buyer. A closed cycle whose
timestamps increase is a round trip with no net position change.
"""

from nftwash.cycles import classify_cycle, find_cycles
from nftwash.graph import NftGraph, sale, transfer

# A self-directed trade is a cycle of length one.
print(find_cycles(NftGraph.of([sale("s1", "A", "A", 1)]))[0].length)

# Two-transaction round trips, with sales and transfers mixed.
for edges in (
    [sale("a", "A", "B", 1), sale("b", "B", "A", 2)],
    [sale("a", "A", "B", 1), transfer("b", "B", "A", 2)],
    [transfer("a", "A", "B", 1), sale("b", "B", "A", 2)],
):
    (c,) = find_cycles(NftGraph.of(edges))
    print(c.tx_ids, classify_cycle(c), c.usd_volume)

# A round trip made only of transfers moves no money and is ignored.
print(find_cycles(NftGraph.of([transfer("a", "A", "B", 1), transfer("b", "B", "A", 2)])))

###############################################################################
# Overlapping activity splits into sub-cycles that are distinct by time.
# B and C trade back and forth, then B, C and D close a second loop.

g = NftGraph.of([
    sale("t1", "B", "C", 1), sale("t2", "C", "B", 2), sale("t3", "B", "C", 3),
    sale("t4", "C", "D", 4), sale("t5", "D", "B", 5),
])
for c in find_cycles(g):
    print(c.tx_ids, c.addresses, f"{c.start_ts}->{c.end_ts}")

"""Hand-built graphs shared by unit and acceptance tests."""

from nftwash.graph import NftGraph, sale, transfer

# name -> (edges, expected findings as tuples of tx ids)
CYCLE_EXAMPLES = {
    "1_self_loop": ([sale("s1", "A", "A", 1)], {("s1",)}),
    "2_sale_sale": ([sale("a", "A", "B", 1), sale("b", "B", "A", 2)], {("a", "b")}),
    "3_sale_transfer": ([sale("a", "A", "B", 1), transfer("b", "B", "A", 2)], {("a", "b")}),
    "4_transfer_sale": ([transfer("a", "A", "B", 1), sale("b", "B", "A", 2)], {("a", "b")}),
    "5_transfer_only": ([transfer("a", "A", "B", 1), transfer("b", "B", "A", 2)], set()),
    "6_sub_cycles": (
        [sale("t1", "B", "C", 1), sale("t2", "C", "B", 2), sale("t3", "B", "C", 3),
         sale("t4", "C", "D", 4), sale("t5", "D", "B", 5)],
        {("t1", "t2"), ("t3", "t4", "t5")},
    ),
}


def example_graph(name):
    edges, _ = CYCLE_EXAMPLES[name]
    return NftGraph.of(edges)

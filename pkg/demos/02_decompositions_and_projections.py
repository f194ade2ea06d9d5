"""Decomposition trees: validation, widths, normalization, projections.

    python demos/02_decompositions_and_projections.py
"""

from pathlib import Path

from lpcq import (
    bag_projections,
    fractional_bag_width,
    heuristic_decompose,
    load_database,
    load_decompositions,
    normalize,
    parse_query,
    qf,
    tree_width,
    validate,
)

here = Path(__file__).parent
db = load_database(here / "delivery" / "data")

(tree,) = load_decompositions(here / "delivery" / "decomp.json")
body = qf(tree.query)
validate(tree, body)
print(f"loaded tree: {len(tree.bags)} bags, fractional width {tree_width(tree, body):g}")
for node in tree.nodes:
    bag = ",".join(sorted(tree.bags[node]))
    print(f"  node {node}: {{{bag}}}  width {fractional_bag_width(tree.bags[node], body):g}")

# projections are computed by two semi-join sweeps, never materializing
# the full answer set
proj = bag_projections(body, tree, db)
print("\nbag projection sizes:", {n: len(a) for n, a in proj.items()})

# normalization classifies every node and tops the tree with an empty bag
norm = normalize(tree)
kinds = [norm.classify(n).kind for n in norm.bfs_order()]
print("\nnormalized:", len(norm.bags), "nodes:", " ".join(kinds))

# with no tree at hand, a min-fill heuristic builds one
triangle = parse_query("R(x, y) /\\ S(y, z) /\\ T(z, x)")
auto = heuristic_decompose(triangle)
print(f"\nheuristic tree for the triangle query: width {tree_width(auto, triangle):g}, "
      f"bags {sorted(tuple(sorted(b)) for b in auto.bags.values())}")

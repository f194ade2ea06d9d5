"""Weightings over answer sets and their reconstruction from bag marginals.

A weighting assigns a nonnegative mass to every row of an answer set.
Projecting a weighting onto a variable subset sums masses over extension
classes and preserves total mass.  A *weighting collection* holds one
weighting per node of a decomposition tree; it is *sound* when adjacent
nodes agree on their shared-variable marginals.

The centerpiece is ``reconstruct``: given a sound collection on a
normalized tree whose underlying relation is conjunctively decomposed (true
for answer sets of quantifier-free queries), it builds a weighting of the
full relation whose per-bag projections are exactly the collection.  The
construction is a single bottom-up pass with multiplicative corrections at
extend and join nodes; near-zero denominators route to the zero branch
deterministically (threshold 1e-12).  ``reconstruct_point`` evaluates the
same function at one row without materializing anything.

``solution_to_weights`` applies this to a solved factorized program: the
bag-variable values form a sound collection (up to solver tolerance), and
reconstruction lifts them to per-answer weights that are feasible for the
answer-variable formulation at the same objective value.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from .decomp import DecompTree, normalize
from .errors import (
    BadSubsetError,
    NotAnAnswerError,
    TooLargeError,
    UnsoundCollectionError,
)
from .queries import AnswerSet, evaluate
from .relations import Assignment, Database, Value

ZERO_TOL = 1e-12
SOUND_TOL = 1e-7
MATERIALIZE_LIMIT = 10**6


class Weighting:
    """Total nonnegative mass function on an answer set."""

    __slots__ = ("base", "values")

    def __init__(self, base: AnswerSet, values: Mapping):
        self.base = base
        self.values: dict[tuple[Value, ...], float] = {}
        for key, mass in values.items():
            if isinstance(key, Assignment):
                key = tuple(key[v] for v in base.variables)
            self.values[key] = float(mass)
        for row in base.rows:
            if row not in self.values:
                raise BadSubsetError("weighting is not total on its answer set")
        if len(self.values) != len(base):
            raise BadSubsetError("weighting assigns rows outside its answer set")
        for mass in self.values.values():
            if mass < 0:
                raise BadSubsetError("weightings are nonnegative")

    @classmethod
    def uniform(cls, base: AnswerSet, mass: float = 1.0) -> "Weighting":
        return cls(base, {row: mass for row in base.rows})

    def __getitem__(self, key) -> float:
        if isinstance(key, Assignment):
            key = tuple(key[v] for v in self.base.variables)
        return self.values[key]

    def get(self, key, default: float = 0.0) -> float:
        if isinstance(key, Assignment):
            key = tuple(key.get(v) for v in self.base.variables)
        return self.values.get(key, default)

    def total(self) -> float:
        return sum(self.values.values())

    def items(self):
        for row in self.base.rows:
            yield Assignment(self.base.variables, row), self.values[row]

    def __repr__(self):
        return f"Weighting({len(self.values)} rows, total={self.total():g})"


def project_weighting(w: Weighting, variables: Iterable[str]) -> Weighting:
    """Mass-preserving projection onto a subset of the variables."""
    wanted = frozenset(variables)
    if not wanted <= set(w.base.variables):
        raise BadSubsetError(
            f"{sorted(wanted)} is not a subset of {w.base.variables}"
        )
    restricted = w.base.restrict(wanted)
    groups = w.base.group_by(wanted)
    rows = w.base.rows
    out = {key: sum(w.values[rows[i]] for i in members) for key, members in groups.items()}
    return Weighting(restricted, out)


class WeightingCollection:
    """One weighting per tree node, each over the bag's projection."""

    def __init__(self, tree: DecompTree, per_node: Mapping[int, Weighting]):
        self.tree = tree
        self.per_node = dict(per_node)
        for node in tree.bags:
            if node not in self.per_node:
                raise BadSubsetError(f"collection misses node {node}")

    def __getitem__(self, node: int) -> Weighting:
        return self.per_node[node]

    def __repr__(self):
        return f"WeightingCollection({len(self.per_node)} nodes)"


def collection_from_weighting(w: Weighting, tree: DecompTree) -> WeightingCollection:
    """Per-bag projections of one weighting; always sound."""
    return WeightingCollection(
        tree, {node: project_weighting(w, bag) for node, bag in tree.bags.items()}
    )


class SoundnessViolation:
    __slots__ = ("edge", "gamma", "lhs", "rhs")

    def __init__(self, edge, gamma, lhs, rhs):
        self.edge = edge
        self.gamma = gamma
        self.lhs = lhs
        self.rhs = rhs

    def __repr__(self):
        shared = ",".join(v.text for v in self.gamma)
        return f"violation at edge {self.edge} on ({shared}): {self.lhs} != {self.rhs}"


def check_sound(
    collection: WeightingCollection,
    tol: float = SOUND_TOL,
    pairwise: bool = False,
) -> SoundnessViolation | None:
    """First marginal disagreement, or None when the collection is sound.

    Edge-wise by default, which is what the construction and the factorized
    program's constraints use; ``pairwise`` additionally checks every node
    pair (strict mode).
    """
    tree = collection.tree
    if pairwise:
        nodes = sorted(tree.bags)
        pairs = [(u, v) for i, u in enumerate(nodes) for v in nodes[i + 1:]]
    else:
        pairs = sorted(tree.edges)
    for u, v in pairs:
        shared = tree.bags[u] & tree.bags[v]
        left = project_weighting(collection[u], shared)
        right = project_weighting(collection[v], shared)
        keys = set(left.values) | set(right.values)
        for gamma in sorted(keys, key=lambda row: tuple(x.text for x in row)):
            lhs = left.values.get(gamma, 0.0)
            rhs = right.values.get(gamma, 0.0)
            if abs(lhs - rhs) > tol:
                return SoundnessViolation((u, v), gamma, lhs, rhs)
    return None


def check_conj_decomposed(
    answers: AnswerSet, tree: DecompTree, guard: int = 10**4
):
    """Brute-force test of conjunctive decomposition; None when it holds.

    Returns a witness (node, beta, alpha_up, alpha_down) whose join escapes
    the relation otherwise.  Refuses relations above the guard size.
    """
    if len(answers) > guard:
        raise TooLargeError(f"{len(answers)} rows exceeds the brute-force guard {guard}")
    down = tree.down_vars()
    all_nodes = set(tree.bags)
    for u in sorted(tree.bags):
        down_set = {
            v for v in all_nodes
            if v == u or _is_descendant(tree, u, v)
        }
        up_set = (all_nodes - down_set) | {u}
        up_vars = frozenset().union(*(tree.bags[v] for v in up_set))
        down_vars = down[u]
        a_up = answers.restrict(up_vars)
        a_dn = answers.restrict(down_vars)
        bag = tree.bags[u]
        up_groups = _extensions(a_up, bag)
        dn_groups = _extensions(a_dn, bag)
        for beta_key, ups in up_groups.items():
            downs = dn_groups.get(beta_key, ())
            for alpha_up in ups:
                for alpha_dn in downs:
                    merged = alpha_up.union(alpha_dn)
                    if merged is None:
                        continue
                    full = merged.restrict(answers.variables)
                    if full not in answers:
                        beta = Assignment(tuple(sorted(bag)), beta_key)
                        return (u, beta, alpha_up, alpha_dn)
    return None


def _is_descendant(tree: DecompTree, root: int, node: int) -> bool:
    while node is not None:
        if node == root:
            return True
        node = tree.parent[node]
    return False


def _extensions(restricted: AnswerSet, bag: frozenset[str]) -> dict:
    groups = restricted.group_by(bag)
    return {
        key: [Assignment(restricted.variables, restricted.rows[i]) for i in members]
        for key, members in groups.items()
    }


def _row_projector(from_vars: tuple[str, ...], to_vars: Iterable[str]):
    idx = [from_vars.index(v) for v in sorted(to_vars)]
    if not idx:
        return lambda row: ()
    if len(idx) == 1:
        i = idx[0]
        return lambda row: (row[i],)
    from operator import itemgetter

    getter = itemgetter(*idx)
    return getter


def reconstruct(
    collection: WeightingCollection,
    answers: AnswerSet,
    debug: bool = False,
) -> Weighting:
    """Weighting of *answers* whose per-bag projections equal the collection.

    Requires a normalized tree, a sound collection, and a conjunctively
    decomposed relation (query answer sets qualify).  ``debug`` additionally
    verifies that every intermediate weighting is the projection of the
    final one, which is quadratic and meant for tests.
    """
    tree = collection.tree
    if not tree.is_normalized():
        raise ValueError("reconstruct needs a normalized tree; normalize() first")
    if len(answers) > MATERIALIZE_LIMIT:
        raise TooLargeError(
            f"{len(answers)} answers exceed the materialization guard; "
            "use reconstruct_point"
        )
    violation = check_sound(collection)
    if violation is not None:
        raise UnsoundCollectionError(
            violation.edge, violation.gamma, violation.lhs, violation.rhs, SOUND_TOL
        )

    down = tree.down_vars()
    down_sets: dict[int, AnswerSet] = {
        node: answers.restrict(down[node]) for node in tree.bags
    }
    omega: dict[int, dict[tuple[Value, ...], float]] = {}

    for node in tree.post_order():
        kind = tree.classify(node)
        base = down_sets[node]
        rows = base.rows
        values: dict[tuple[Value, ...], float] = {}
        if kind.kind == "leaf":
            w = collection[node]
            for row in rows:
                values[row] = w.values[row]
        elif kind.kind == "project":
            (child,) = tree.children[node]
            values = omega[child]
        elif kind.kind == "extend":
            (child,) = tree.children[node]
            to_bag = _row_projector(base.variables, tree.bags[node])
            to_child_bag = _row_projector(base.variables, tree.bags[child])
            to_child_down = _row_projector(base.variables, down[child])
            bag_w = collection[node].values
            child_bag_w = collection[child].values
            child_omega = omega[child]
            for row in rows:
                denom = child_bag_w.get(to_child_bag(row), 0.0)
                if denom > ZERO_TOL:
                    values[row] = (
                        bag_w.get(to_bag(row), 0.0)
                        / denom
                        * child_omega[to_child_down(row)]
                    )
                else:
                    values[row] = 0.0
        else:  # join
            kids = tree.children[node]
            to_bag = _row_projector(base.variables, tree.bags[node])
            kid_proj = [(k, _row_projector(base.variables, down[k])) for k in kids]
            bag_w = collection[node].values
            k = len(kids)
            for row in rows:
                mass = bag_w.get(to_bag(row), 0.0)
                if mass > ZERO_TOL:
                    prod = 1.0
                    for kid, proj in kid_proj:
                        prod *= omega[kid][proj(row)]
                    values[row] = prod / mass ** (k - 1)
                else:
                    values[row] = 0.0
        omega[node] = values

    result = Weighting(down_sets[tree.root], omega[tree.root])
    if debug:
        for node in tree.bags:
            expected = project_weighting(result, down[node])
            for row, mass in omega[node].items():
                if abs(expected.values[row] - mass) > 1e-6:
                    raise AssertionError(
                        f"node {node}: intermediate weight {mass} vs projection "
                        f"{expected.values[row]}"
                    )
    return result


def reconstruct_point(collection: WeightingCollection, alpha: Assignment) -> float:
    """Mass of one answer under the reconstruction, via a root-to-leaf walk."""
    tree = collection.tree
    if not tree.is_normalized():
        raise ValueError("reconstruct_point needs a normalized tree; normalize() first")
    bound = dict(alpha.items())

    def row_for(node: int, variables: Iterable[str]) -> tuple[Value, ...]:
        try:
            return tuple(bound[v] for v in sorted(variables))
        except KeyError as exc:
            raise NotAnAnswerError(f"assignment misses variable {exc}") from exc

    for node, bag in tree.bags.items():
        if row_for(node, bag) not in collection[node].values:
            raise NotAnAnswerError(
                f"restriction to bag of node {node} is not a projection row"
            )

    def value(node: int) -> float:
        kind = tree.classify(node)
        if kind.kind == "leaf":
            return collection[node].values[row_for(node, tree.bags[node])]
        if kind.kind == "project":
            (child,) = tree.children[node]
            return value(child)
        if kind.kind == "extend":
            (child,) = tree.children[node]
            denom = collection[child].values.get(row_for(child, tree.bags[child]), 0.0)
            if denom <= ZERO_TOL:
                return 0.0
            return (
                collection[node].values.get(row_for(node, tree.bags[node]), 0.0)
                / denom
                * value(child)
            )
        kids = tree.children[node]
        mass = collection[node].values.get(row_for(node, tree.bags[node]), 0.0)
        if mass <= ZERO_TOL:
            return 0.0
        prod = 1.0
        for kid in kids:
            prod *= value(kid)
        return prod / mass ** (len(kids) - 1)

    return value(tree.root)


def transport_collection(
    collection: WeightingCollection, normalized: DecompTree
) -> WeightingCollection:
    """Carry a collection from a tree onto its normalized form.

    Each normalized node's bag sits inside the bag of its recorded source
    node, so its weighting is that source's projection; edge soundness
    transfers because projections commute.
    """
    per_node = {}
    for node, bag in normalized.bags.items():
        src = normalized.source[node]
        per_node[node] = project_weighting(collection[src], bag)
    return WeightingCollection(normalized, per_node)


def solution_to_weights(solution, interpreted, query_key, db: Database) -> Weighting:
    """Per-answer weights from a solved factorized program.

    Reads the bag-variable values for *query_key*, re-checks soundness
    (solver drift beyond 1e-5 is an error), reconstructs over the full
    answer set, and returns the resulting weighting.
    """
    if solution.status != "optimal":
        raise ValueError(f"solution status is {solution.status!r}, need optimal")
    tree = interpreted.trees[query_key]
    entries = interpreted.xi[query_key]
    per_node = {}
    for node, (proj, names) in entries.items():
        per_node[node] = Weighting(
            proj,
            {
                row: max(0.0, solution.assignment.get(name, 0.0))
                for row, name in zip(proj.rows, names)
            },
        )
    collection = WeightingCollection(tree, per_node)

    if not tree.is_normalized():
        ntree = normalize(tree)
        collection = transport_collection(collection, ntree)
        tree = ntree

    violation = check_sound(collection, tol=SOUND_TOL)
    if violation is not None and abs(violation.lhs - violation.rhs) > 1e-5:
        raise UnsoundCollectionError(
            violation.edge, violation.gamma, violation.lhs, violation.rhs, 1e-5
        )

    answers = evaluate(query_key[1], db)
    return reconstruct(collection, answers)

"""Synthetic delivery-schema instances for benchmarks and demos.

The schema has four tables: prod(factory, object, quantity),
order(buyer, object, quantity), store(warehouse, limit), and
route(place, place, cost).  Key columns draw from a shared token domain
d0..d{n-1}; numeric columns draw uniformly from [1, 100] with two decimals.

For a table of arity k, the domain size is the smallest n with
n^k >= size / selectivity, and the generator samples ``size`` distinct
tuples from the n^k grid without replacement, so ``selectivity`` is the
fraction of the grid that gets filled.  Everything is a pure function of
the spec: the same seed reproduces the same bytes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .errors import InfeasibleSpecError
from .relations import Database, Relation, Value, save_database


@dataclass(frozen=True)
class TableSpec:
    name: str
    arity: int
    numeric_positions: frozenset[int]


DELIVERY_SCHEMA = (
    TableSpec("prod", 3, frozenset({2})),
    TableSpec("order", 3, frozenset({2})),
    TableSpec("route", 3, frozenset({2})),
    TableSpec("store", 2, frozenset({1})),
)

DEFAULT_SELECTIVITY = 0.01


@dataclass(frozen=True)
class GenSpec:
    size: int
    seed: int = 1
    selectivity: float = DEFAULT_SELECTIVITY

    def __post_init__(self):
        if self.size < 1:
            raise InfeasibleSpecError("size must be at least 1")
        if not 0 < self.selectivity <= 1:
            raise InfeasibleSpecError("selectivity must be in (0, 1]")

    def domain_size(self, arity: int) -> int:
        """Smallest n with n**arity >= size / selectivity."""
        target = self.size / self.selectivity
        n = max(1, round(target ** (1.0 / arity)))
        while n**arity < target - 1e-9:
            n += 1
        while n > 1 and (n - 1) ** arity >= target - 1e-9:
            n -= 1
        return n


def _sample_grid(rng: random.Random, n: int, arity: int, count: int) -> list[tuple[int, ...]]:
    total = n**arity
    if count > total:
        raise InfeasibleSpecError(f"cannot draw {count} distinct tuples from {total}")
    if total <= 2_000_000:
        picks = sorted(rng.sample(range(total), count))
    else:
        seen: set[int] = set()
        while len(seen) < count:
            seen.add(rng.randrange(total))
        picks = sorted(seen)
    rows = []
    for index in picks:
        digits = []
        for _ in range(arity):
            index, digit = divmod(index, n)
            digits.append(digit)
        rows.append(tuple(reversed(digits)))
    return rows


def generate_delivery(spec: GenSpec) -> Database:
    """Delivery database with ``spec.size`` rows per table."""
    rng = random.Random(spec.seed)
    relations = {}
    for table in DELIVERY_SCHEMA:
        n = spec.domain_size(table.arity)
        grid_rows = _sample_grid(rng, n, table.arity, spec.size)
        seen: set[tuple[str, ...]] = set()
        tuples = []
        for digits in grid_rows:
            while True:
                cells = tuple(
                    f"{rng.uniform(1.0, 100.0):.2f}" if pos in table.numeric_positions
                    else f"d{digits[pos]}"
                    for pos in range(table.arity)
                )
                # numeric redraw on the rare full-row collision keeps the
                # row count exact
                if cells not in seen:
                    break
            seen.add(cells)
            tuples.append(tuple(Value(c) for c in cells))
        relations[table.name] = Relation(table.name, table.arity, tuples)
    return Database(relations)


def write_delivery(spec: GenSpec, out_dir: str | Path) -> Database:
    db = generate_delivery(spec)
    save_database(db, out_dir)
    return db

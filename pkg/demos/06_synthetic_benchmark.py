"""Interpretation sizes on growing synthetic delivery instances.

Both interpretations always reach the same optimum; the point of the
factorized one is fewer variables as the data grows.  Sizes here are kept
small so the script finishes in seconds; pass sizes on the command line to
push further (the CLI equivalent is `lpcq bench --sizes ...`).

    python demos/06_synthetic_benchmark.py [size ...]
"""

import sys

from lpcq.cli import BENCH_SELECTIVITY, bench_rows

sizes = [int(a) for a in sys.argv[1:]] or [50, 100, 200]
rows = bench_rows(sizes, seed=1, reps=1, selectivity=BENCH_SELECTIVITY)

header = f"{'m':>6} {'status':>10} {'natural':>12} {'factorized':>12} {'ratio':>7} {'value':>12}"
print(header)
print("-" * len(header))
for row in rows:
    ratio = row["natural_vars"] / max(1, row["factorized_vars"])
    value = f"{row['value']:.4f}" if row["value"] is not None else "-"
    print(
        f"{row['size']:>6} {row['status']:>10} {row['natural_vars']:>12} "
        f"{row['factorized_vars']:>12} {ratio:>6.1f}x {value:>12}"
    )

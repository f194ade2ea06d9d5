"""Command-line driver: solve, gen, bench, width, check-decomp.

Exit codes: 0 solved (or command succeeded), 1 infeasible, 2 unbounded,
3 input error.  ``LPCQ_TOL`` overrides the 1e-6 tolerance used when the
benchmark asserts that both interpretations agree.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .decomp import (
    DecompTree,
    attach_target_bags,
    check_compatible,
    ensure_empty_root,
    fractional_bag_width,
    heuristic_decompose,
    load_decompositions,
    match_tree_to_query,
    normalize,
    tree_width,
    validate,
)
from .errors import IncompatibleTargetError, LpcqError, MissingDecompositionError
from .interpret import InterpretedLp, factorized, natural, quantifier_eliminate, replacement
from .language import ClosedProgram, LpcqProgram, SWeight, close, normal_form, parse
from .lpformat import export_lp
from .linprog import solve
from .queries import qf
from .relations import Database, load_database
from .synth import DEFAULT_SELECTIVITY, GenSpec, generate_delivery, write_delivery
from .weightings import solution_to_weights

DEFAULT_TOL = 1e-6

# grid fill fraction for benchmark instances: dense enough that answer sets
# dwarf their bag projections, sparse enough that the answer-variable
# interpretation stays buildable at the largest benchmark size
BENCH_SELECTIVITY = 0.04


def reporting_tolerance() -> float:
    raw = os.environ.get("LPCQ_TOL")
    if not raw:
        return DEFAULT_TOL
    try:
        return float(raw)
    except ValueError:
        return DEFAULT_TOL


@dataclass
class RunReport:
    mode: str
    status: str
    value: float | None = None
    theta_vars: int = 0
    xi_vars: int = 0
    nu_vars: int = 0
    user_constraints: int = 0
    weight_constraints: int = 0
    soundness_constraints: int = 0
    seconds: dict = field(default_factory=dict)
    projection_sizes: dict = field(default_factory=dict)

    @property
    def total_vars(self) -> int:
        return self.theta_vars + self.xi_vars + self.nu_vars

    @property
    def total_constraints(self) -> int:
        return self.user_constraints + self.weight_constraints + self.soundness_constraints

    def lines(self) -> list[str]:
        out = [f"mode: {self.mode}", f"status: {self.status}"]
        if self.value is not None:
            out.append(f"value: {self.value:.9g}")
        out.append(
            "variables: theta=%d xi=%d nu=%d total=%d"
            % (self.theta_vars, self.xi_vars, self.nu_vars, self.total_vars)
        )
        out.append(
            "constraints: user=%d weight=%d soundness=%d total=%d"
            % (
                self.user_constraints,
                self.weight_constraints,
                self.soundness_constraints,
                self.total_constraints,
            )
        )
        if self.seconds:
            stamped = " ".join(f"{k}={v:.3f}" for k, v in self.seconds.items())
            out.append(f"phase seconds: {stamped}")
        for qname, sizes in self.projection_sizes.items():
            listed = ", ".join(f"n{node}:{count}" for node, count in sorted(sizes.items()))
            out.append(f"projections[{qname}]: {listed}")
        return out

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "status": self.status,
            "value": self.value,
            "variables": {
                "theta": self.theta_vars,
                "xi": self.xi_vars,
                "nu": self.nu_vars,
                "total": self.total_vars,
            },
            "constraints": {
                "user": self.user_constraints,
                "weight": self.weight_constraints,
                "soundness": self.soundness_constraints,
                "total": self.total_constraints,
            },
            "seconds": self.seconds,
            "projections": {
                name: dict(sizes) for name, sizes in self.projection_sizes.items()
            },
        }


def _report_from(ilp: InterpretedLp, status: str, value, seconds) -> RunReport:
    counts = ilp.provenance_counts()
    report = RunReport(
        mode=ilp.mode,
        status=status,
        value=value,
        theta_vars=ilp.theta_count,
        xi_vars=ilp.xi_count,
        nu_vars=ilp.nu_count,
        user_constraints=counts["user"],
        weight_constraints=counts["weight"],
        soundness_constraints=counts["soundness"],
        seconds=seconds,
    )
    for (name, _), nodes in ilp.xi.items():
        report.projection_sizes[name] = {
            node: len(proj) for node, (proj, _) in nodes.items()
        }
    return report


def _prepare_tree(tree: DecompTree, targets) -> DecompTree:
    tree = attach_target_bags(tree, [t for t in targets if t])
    if any(not t for t in targets):
        tree = ensure_empty_root(tree)
    return tree


def build_decompositions(
    cp: ClosedProgram,
    cp_qf: ClosedProgram,
    decomp_path: str | None,
    use_heuristic: bool,
):
    """Decomposition per weight-bearing query of the eliminated program."""
    qf_of = {}
    for name, query in cp.queries_w():
        qf_of[(name, query)] = (name, qf(query))
    targets_by_key: dict = {}
    for w in cp_qf.weight_exprs():
        targets_by_key.setdefault((w.query_name, w.query), []).append(w.target_vars())

    decomps = {}
    if decomp_path:
        trees = load_decompositions(decomp_path)
        for orig_key, qf_key in qf_of.items():
            matched = None
            for tree in trees:
                matched = match_tree_to_query(tree, orig_key[1])
                if matched is not None:
                    break
            if matched is None:
                raise MissingDecompositionError(
                    f"{decomp_path} has no decomposition for query {orig_key[0]!r}"
                )
            decomps[qf_key] = _prepare_tree(matched, targets_by_key.get(qf_key, []))
    elif use_heuristic:
        for orig_key, qf_key in qf_of.items():
            targets = targets_by_key.get(qf_key, [])
            tree = heuristic_decompose(qf_key[1], targets)
            decomps[qf_key] = normalize(tree)
    else:
        raise MissingDecompositionError(
            "factorized mode needs --decomp FILE or --heuristic-decomp"
        )
    return decomps


def run_pipeline(
    program: LpcqProgram,
    db: Database,
    mode: str,
    decomp_path: str | None = None,
    use_heuristic: bool = False,
    engine: str = "auto",
):
    """parse -> normal form -> close -> eliminate quantifiers -> interpret -> solve."""
    seconds: dict[str, float] = {}
    t0 = time.perf_counter()
    cp = close(normal_form(program), db)
    cp_qf = quantifier_eliminate(cp)
    seconds["evaluate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if mode == "natural":
        ilp = natural(cp_qf, db)
    elif mode == "replacement":
        ilp = replacement(cp_qf, db)
    elif mode == "factorized":
        decomps = build_decompositions(cp, cp_qf, decomp_path, use_heuristic)
        ilp = factorized(cp_qf, decomps, db)
    else:
        raise LpcqError(f"unknown mode {mode!r}")
    seconds["interpret"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    solution = solve(ilp.lp, engine=engine)
    seconds["solve"] = time.perf_counter() - t0

    value = None
    if solution.status == "optimal":
        value = cp.user_value(solution.value)
    report = _report_from(ilp, solution.status, value, seconds)
    return cp_qf, ilp, solution, report


def _write_weights(path: str, cp_qf, ilp: InterpretedLp, solution, db) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        for key in cp_qf.queries_w():
            name, _query = key
            handle.write(f"# {name}\n")
            if ilp.mode in ("natural", "replacement"):
                answers, names = ilp.theta[key]
                masses = {
                    row: max(0.0, solution.assignment.get(var, 0.0))
                    for row, var in zip(answers.rows, names)
                }
                variables = answers.variables
                rows = answers.rows
            else:
                weighting = solution_to_weights(solution, ilp, key, db)
                variables = weighting.base.variables
                rows = weighting.base.rows
                masses = weighting.values
            for row in rows:
                cells = [f"{v}={val.text}" for v, val in zip(variables, row)]
                cells.append(f"{masses[row]:.12g}")
                writer.writerow(cells)


def cmd_solve(args) -> int:
    try:
        program = parse(Path(args.program).read_text(encoding="utf-8"))
        db = load_database(args.db)
        cp_qf, ilp, solution, report = run_pipeline(
            program,
            db,
            args.mode,
            decomp_path=args.decomp,
            use_heuristic=args.heuristic_decomp,
            engine=args.engine,
        )
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except LpcqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    if args.emit_lp:
        export_lp(ilp.lp, args.emit_lp)
    if args.explain:
        for i, (con, tag) in enumerate(zip(ilp.lp.constraints, ilp.provenance)):
            print(f"[{tag}] c{i + 1}: {con!r}")
    if args.weights and solution.status == "optimal":
        _write_weights(args.weights, cp_qf, ilp, solution, db)

    if args.json:
        print(json.dumps(report.as_dict(), indent=2))
    else:
        for line in report.lines():
            print(line)

    if solution.status == "infeasible":
        return 1
    if solution.status == "unbounded":
        return 2
    return 0


def cmd_gen(args) -> int:
    try:
        spec = GenSpec(size=args.size, seed=args.seed, selectivity=args.selectivity)
        db = write_delivery(spec, args.out)
    except LpcqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {len(db.relations)} tables, {db.size} tuples to {args.out}")
    return 0


# the benchmark's throughput program over the delivery schema; structurally
# feasible (zero ships) and bounded (every answer hits a production cap)
BENCH_PROGRAM = """
let dlr(f', w', b', o') =
  exists q, q2, c, c2.
    prod(f', o', q) /\\ order(b', o', q2) /\\ route(f', w', c) /\\ route(w', b', c2)

maximize weight[(f', w', b', o'): true](dlr)
subject to
  forall (f, o, q): prod(f, o, q).
    weight[(f', w', b', o'): f' == f /\\ o' == o](dlr) <= num(q)
  /\\ forall (b, o, q): order(b, o, q).
    weight[(f', w', b', o'): b' == b /\\ o' == o](dlr) <= num(q)
  /\\ forall (w, l): store(w, l).
    weight[(f', w', b', o'): w' == w](dlr) <= num(l)
"""

# delivery decomposition with one bag per atom plus two 3-variable
# connector bags; same fractional width as the coarse two-bag tree but far
# smaller bag projections on uniform data
BENCH_DECOMP = {
    "query": "exists q, q2, c, c2. prod(f', o', q) /\\ order(b', o', q2) "
             "/\\ route(f', w', c) /\\ route(w', b', c2)",
    "root": 1,
    "nodes": [
        {"id": 1, "bag": ["b'", "f'", "o'"]},
        {"id": 2, "bag": ["b'", "f'", "w'"]},
        {"id": 3, "bag": ["f'", "o'"]},
        {"id": 4, "bag": ["f'", "o'", "q"]},
        {"id": 5, "bag": ["b'", "o'"]},
        {"id": 6, "bag": ["b'", "o'", "q2"]},
        {"id": 7, "bag": ["f'", "w'"]},
        {"id": 8, "bag": ["c", "f'", "w'"]},
        {"id": 9, "bag": ["b'", "w'"]},
        {"id": 10, "bag": ["b'", "c2", "w'"]},
    ],
    "edges": [[1, 2], [1, 3], [3, 4], [1, 5], [5, 6], [2, 7], [7, 8], [2, 9], [9, 10]],
}

# the coarse width-2 alternative with one bag per route hop
BENCH_DECOMP_COARSE = {
    "query": BENCH_DECOMP["query"],
    "root": 1,
    "nodes": [
        {"id": 1, "bag": ["b'", "c2", "f'", "o'", "q", "w'"]},
        {"id": 2, "bag": ["b'", "c", "f'", "o'", "q2", "w'"]},
    ],
    "edges": [[1, 2]],
}

BENCH_FIELDS = [
    "size", "rep", "seed", "status",
    "natural_vars", "natural_constraints", "natural_build_s", "natural_solve_s",
    "factorized_vars", "factorized_constraints", "factorized_build_s", "factorized_solve_s",
    "value",
]


def bench_rows(sizes, seed, reps, selectivity, decomp_dict=None, engine="auto"):
    """One row per (size, rep): both interpretations must agree."""
    import tempfile

    tol = reporting_tolerance()
    program = parse(BENCH_PROGRAM)
    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        decomp_path = Path(tmp) / "delivery_decomp.json"
        decomp_path.write_text(json.dumps(decomp_dict or BENCH_DECOMP))
        for size in sizes:
            for rep in range(reps):
                inst_seed = seed + rep
                db = generate_delivery(
                    GenSpec(size=size, seed=inst_seed, selectivity=selectivity)
                )
                _, nat_ilp, nat_sol, nat_rep = run_pipeline(
                    program, db, "natural", engine=engine
                )
                _, fac_ilp, fac_sol, fac_rep = run_pipeline(
                    program, db, "factorized", decomp_path=str(decomp_path), engine=engine
                )
                if nat_sol.status != fac_sol.status:
                    raise LpcqError(
                        f"size {size} rep {rep}: status mismatch "
                        f"{nat_sol.status} vs {fac_sol.status}"
                    )
                value = None
                if nat_sol.status == "optimal":
                    gap = abs(nat_sol.value - fac_sol.value)
                    if gap > tol * max(1.0, abs(nat_sol.value)):
                        raise LpcqError(
                            f"size {size} rep {rep}: optima differ by {gap}"
                        )
                    value = nat_rep.value
                rows.append({
                    "size": size,
                    "rep": rep,
                    "seed": inst_seed,
                    "status": nat_sol.status,
                    "natural_vars": nat_rep.total_vars,
                    "natural_constraints": nat_rep.total_constraints,
                    "natural_build_s": round(
                        nat_rep.seconds["evaluate"] + nat_rep.seconds["interpret"], 4
                    ),
                    "natural_solve_s": round(nat_rep.seconds["solve"], 4),
                    "factorized_vars": fac_rep.total_vars,
                    "factorized_constraints": fac_rep.total_constraints,
                    "factorized_build_s": round(
                        fac_rep.seconds["evaluate"] + fac_rep.seconds["interpret"], 4
                    ),
                    "factorized_solve_s": round(fac_rep.seconds["solve"], 4),
                    "value": value,
                })
    return rows


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()] if args.sizes else []
    try:
        rows = bench_rows(sizes, args.seed, args.reps, args.selectivity)
    except LpcqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=BENCH_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_width(args) -> int:
    try:
        trees = load_decompositions(args.decomp)
    except (OSError, LpcqError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    status = 0
    for i, tree in enumerate(trees):
        if tree.query is None:
            print(f"tree {i}: no query declared, cannot compute widths", file=sys.stderr)
            status = 3
            continue
        query = qf(tree.query)
        print(f"tree {i}: root={tree.root}")
        try:
            for node in tree.nodes:
                w = fractional_bag_width(tree.bags[node], query)
                listed = ",".join(sorted(tree.bags[node])) or "-"
                print(f"  node {node} bag {{{listed}}}: width {w:.6g}")
            print(f"  tree width: {tree_width(tree, query):.6g}")
        except LpcqError as exc:
            print(f"  error: {exc}", file=sys.stderr)
            status = 3
    return status


def cmd_check_decomp(args) -> int:
    try:
        trees = load_decompositions(args.decomp)
    except (OSError, LpcqError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    program = None
    if args.program:
        try:
            program = parse(Path(args.program).read_text(encoding="utf-8"))
        except (OSError, LpcqError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3

    status = 0
    for i, tree in enumerate(trees):
        if tree.query is None:
            print(f"tree {i}: no query declared", file=sys.stderr)
            status = 3
            continue
        try:
            validate(tree, qf(tree.query))
            print(f"tree {i}: valid ({len(tree.bags)} nodes)")
        except LpcqError as exc:
            print(f"tree {i}: INVALID: {exc}", file=sys.stderr)
            status = 3
            continue
        if program is None:
            continue
        for name, query in program.queries.items():
            matched = match_tree_to_query(tree, query)
            if matched is None:
                continue
            targets = _weight_targets(program, name)
            try:
                check_compatible(matched, targets)
                print(f"tree {i}: compatible with query {name!r} ({len(targets)} targets)")
            except IncompatibleTargetError as exc:
                print(
                    f"tree {i}: query {name!r}: {exc} "
                    "(solve attaches the missing bags automatically)",
                )
    return status


def _weight_targets(program: LpcqProgram, name: str) -> list[frozenset[str]]:
    from .language import CAnd, CCompare, CForall, CTrue, SAdd, SNum, SScale, SSum

    targets: list[frozenset[str]] = []

    def walk(node):
        if isinstance(node, SWeight):
            if node.query_name == name:
                targets.append(frozenset(x for x, _ in node.targets))
        elif isinstance(node, (SScale, SSum, CForall)):
            walk(node.body)
        elif isinstance(node, (SAdd, CAnd, CCompare)):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, (SNum, CTrue)):
            pass

    walk(program.objective)
    walk(program.constraint)
    return targets


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpcq",
        description="Compile and solve linear programs over conjunctive-query answer sets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a program over a CSV database")
    p_solve.add_argument("program", help="program file (.lpcq)")
    p_solve.add_argument("db", help="directory of <Relation>.csv files")
    p_solve.add_argument(
        "--mode", choices=["natural", "replacement", "factorized"], default="natural"
    )
    p_solve.add_argument("--decomp", help="decomposition JSON for factorized mode")
    p_solve.add_argument(
        "--heuristic-decomp", action="store_true",
        help="derive decompositions when --decomp is omitted",
    )
    p_solve.add_argument("--engine", choices=["auto", "simplex", "highs"], default="auto")
    p_solve.add_argument("--emit-lp", metavar="PATH", help="export the LP in LP format")
    p_solve.add_argument("--weights", metavar="PATH", help="write per-answer weights CSV")
    p_solve.add_argument("--explain", action="store_true", help="print constraint provenance")
    p_solve.add_argument("--json", action="store_true", help="emit the report as JSON")
    p_solve.set_defaults(func=cmd_solve)

    p_gen = sub.add_parser("gen", help="generate a synthetic delivery database")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--size", type=int, required=True, help="tuples per table")
    p_gen.add_argument("--seed", type=int, default=1)
    p_gen.add_argument("--selectivity", type=float, default=DEFAULT_SELECTIVITY)
    p_gen.set_defaults(func=cmd_gen)

    p_bench = sub.add_parser("bench", help="compare natural vs factorized on synthetic data")
    p_bench.add_argument("--sizes", default="", help="comma-separated table sizes")
    p_bench.add_argument("--seed", type=int, default=1)
    p_bench.add_argument("--reps", type=int, default=1)
    p_bench.add_argument(
        "--selectivity", type=float, default=BENCH_SELECTIVITY,
        help="grid fill fraction for generated tables",
    )
    p_bench.add_argument("--out", help="CSV output path (default stdout)")
    p_bench.set_defaults(func=cmd_bench)

    p_width = sub.add_parser("width", help="per-bag fractional widths of a decomposition")
    p_width.add_argument("decomp", help="decomposition JSON")
    p_width.set_defaults(func=cmd_width)

    p_check = sub.add_parser("check-decomp", help="validate a decomposition file")
    p_check.add_argument("decomp", help="decomposition JSON")
    p_check.add_argument("--program", help="program to check weight compatibility against")
    p_check.set_defaults(func=cmd_check_decomp)

    return parser


def main(argv=None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

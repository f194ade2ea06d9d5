import csv
import io
import json
import math
from contextlib import redirect_stdout

import pytest

from lpcq.cli import BENCH_DECOMP, BENCH_DECOMP_COARSE, bench_rows, main
from lpcq.errors import InfeasibleSpecError
from lpcq.lpformat import parse_lp
from lpcq.relations import load_database
from lpcq.synth import GenSpec, generate_delivery

WORKED = """
let Q(x, y) = R1(x) /\\ R2(y)
maximize weight[(x, y): true](Q)
subject to weight[(x, y): x == 0](Q) <= 1
        /\\ weight[(x, y): x == 1](Q) <= 1
"""

THREE_NODE_DECOMP = {
    "query": "R1(x) /\\ R2(y)",
    "root": 0,
    "nodes": [
        {"id": 0, "bag": []},
        {"id": 1, "bag": ["x"]},
        {"id": 2, "bag": ["y"]},
    ],
    "edges": [[0, 1], [0, 2]],
}


@pytest.fixture
def worked_dir(tmp_path):
    db = tmp_path / "db"
    db.mkdir()
    (db / "R1.csv").write_text("0\n1\n")
    (db / "R2.csv").write_text("0\n1\n")
    prog = tmp_path / "worked.lpcq"
    prog.write_text(WORKED)
    decomp = tmp_path / "decomp.json"
    decomp.write_text(json.dumps(THREE_NODE_DECOMP))
    return prog, db, decomp


def run_main(argv):
    out = io.StringIO()
    with redirect_stdout(out):
        code = main(argv)
    return code, out.getvalue()


class TestSolveCommand:
    def test_natural_mode(self, worked_dir):
        prog, db, _ = worked_dir
        code, out = run_main(["solve", str(prog), str(db), "--mode", "natural"])
        assert code == 0
        assert "status: optimal" in out
        assert "value: 2" in out
        assert "theta=4" in out

    def test_factorized_mode_counts(self, worked_dir):
        prog, db, decomp = worked_dir
        code, out = run_main(
            ["solve", str(prog), str(db), "--mode", "factorized", "--decomp", str(decomp)]
        )
        assert code == 0
        assert "value: 2" in out
        assert "xi=5" in out and "nu=3" in out
        assert "soundness=2" in out

    def test_replacement_mode(self, worked_dir):
        prog, db, _ = worked_dir
        code, out = run_main(["solve", str(prog), str(db), "--mode", "replacement"])
        assert code == 0 and "value: 2" in out

    def test_heuristic_decomp(self, worked_dir):
        prog, db, _ = worked_dir
        code, out = run_main(
            ["solve", str(prog), str(db), "--mode", "factorized", "--heuristic-decomp"]
        )
        assert code == 0 and "value: 2" in out

    def test_factorized_needs_decomp(self, worked_dir):
        prog, db, _ = worked_dir
        code, _ = run_main(["solve", str(prog), str(db), "--mode", "factorized"])
        assert code == 3

    def test_emit_lp_round_trips(self, worked_dir, tmp_path):
        prog, db, _ = worked_dir
        lp_path = tmp_path / "out.lp"
        code, _ = run_main(
            ["solve", str(prog), str(db), "--emit-lp", str(lp_path)]
        )
        assert code == 0
        parsed = parse_lp(lp_path)
        from lpcq.linprog import solve

        sol = solve(parsed)
        assert sol.status == "optimal" and abs(sol.value - 2.0) < 1e-9

    def test_weights_output(self, worked_dir, tmp_path):
        prog, db, decomp = worked_dir
        weights = tmp_path / "w.csv"
        code, _ = run_main(
            [
                "solve", str(prog), str(db),
                "--mode", "factorized", "--decomp", str(decomp),
                "--weights", str(weights),
            ]
        )
        assert code == 0
        lines = [l for l in weights.read_text().splitlines() if l and not l.startswith("#")]
        assert len(lines) == 4
        total = 0.0
        for line in lines:
            cells = next(csv.reader([line]))
            assert cells[0].startswith("x=") and cells[1].startswith("y=")
            total += float(cells[-1])
        assert math.isclose(total, 2.0, abs_tol=1e-6)

    def test_explain_prints_provenance(self, worked_dir):
        prog, db, decomp = worked_dir
        code, out = run_main(
            [
                "solve", str(prog), str(db),
                "--mode", "factorized", "--decomp", str(decomp), "--explain",
            ]
        )
        assert code == 0
        assert "[user]" in out and "[weight]" in out and "[soundness]" in out

    def test_json_report(self, worked_dir):
        prog, db, _ = worked_dir
        code, out = run_main(["solve", str(prog), str(db), "--json"])
        assert code == 0
        payload = json.loads(out)
        assert payload["status"] == "optimal"
        assert payload["variables"]["theta"] == 4

    def test_exit_codes(self, tmp_path, worked_dir):
        _, db, _ = worked_dir
        unbounded = tmp_path / "unbounded.lpcq"
        unbounded.write_text(
            "let Q(x, y) = R1(x) /\\ R2(y)\n"
            "maximize weight[(x, y): true](Q) subject to true\n"
        )
        code, _ = run_main(["solve", str(unbounded), str(db)])
        assert code == 2
        infeasible = tmp_path / "infeasible.lpcq"
        infeasible.write_text(
            "let Q(x, y) = R1(x) /\\ R2(y)\n"
            "maximize weight[(x, y): true](Q)\n"
            "subject to weight[(x, y): true](Q) >= 10 /\\ weight[(x, y): true](Q) <= 1\n"
        )
        code, _ = run_main(["solve", str(infeasible), str(db)])
        assert code == 1
        code, _ = run_main(["solve", str(tmp_path / "missing.lpcq"), str(db)])
        assert code == 3

    def test_counting_gadget_value(self, tmp_path):
        db = tmp_path / "db"
        db.mkdir()
        (db / "E.csv").write_text("0,1\n1,2\n2,0\n1,0\n2,1\n0,2\n1,1\n")
        gadget = tmp_path / "count.lpcq"
        gadget.write_text(
            "let P(a, b) = E(a, b)\n"
            "maximize weight[(a, b): true](P)\n"
            "subject to forall (u, v): E(u, v).\n"
            "    weight[(a, b): a == u /\\ b == v](P) <= 1\n"
        )
        code, out = run_main(["solve", str(gadget), str(db)])
        assert code == 0
        # the optimum counts the seven answers
        assert "value: 7" in out


class TestGenCommand:
    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            code, _ = run_main(
                ["gen", "--out", str(out), "--size", "10", "--seed", "1",
                 "--selectivity", "0.01"]
            )
            assert code == 0
        for name in ("prod", "order", "store", "route"):
            assert (a / f"{name}.csv").read_bytes() == (b / f"{name}.csv").read_bytes()

    def test_row_counts(self, tmp_path):
        out = tmp_path / "d"
        run_main(["gen", "--out", str(out), "--size", "10", "--seed", "1"])
        db = load_database(out)
        for name in ("prod", "order", "store", "route"):
            assert len(db.relations[name]) == 10

    def test_single_row(self):
        db = generate_delivery(GenSpec(size=1, seed=3))
        assert all(len(rel) == 1 for rel in db.relations.values())

    def test_full_grid(self):
        db = generate_delivery(GenSpec(size=8, seed=2, selectivity=1.0))
        prod = db.relations["prod"]
        # n = 2, so the key pair grid {d0,d1}^2 appears exactly twice each
        pairs = sorted((r[0].text, r[1].text) for r in prod)
        assert len(prod) == 8
        assert {p for p in pairs} == {
            (a, b) for a in ("d0", "d1") for b in ("d0", "d1")
        }

    def test_infeasible_spec(self):
        with pytest.raises(InfeasibleSpecError):
            GenSpec(size=0)
        with pytest.raises(InfeasibleSpecError):
            GenSpec(size=10, selectivity=2.0)

    def test_numeric_columns_decode(self):
        db = generate_delivery(GenSpec(size=5, seed=9))
        for row in db.relations["store"]:
            assert row[1].numeric is not None
            assert 1.0 <= row[1].numeric <= 100.0


class TestBenchCommand:
    def test_empty_sizes_gives_header_only(self, tmp_path):
        out = tmp_path / "bench.csv"
        code, _ = run_main(["bench", "--sizes", "", "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("size,rep,seed,status")

    def test_small_sizes_rows_and_agreement(self):
        rows = bench_rows([30, 50], seed=1, reps=2, selectivity=0.04)
        assert len(rows) == 4
        assert [r["size"] for r in rows] == [30, 30, 50, 50]
        assert [r["rep"] for r in rows] == [0, 1, 0, 1]

    def test_coarse_tree_also_agrees(self):
        rows = bench_rows(
            [40], seed=1, reps=1, selectivity=0.04, decomp_dict=BENCH_DECOMP_COARSE
        )
        assert rows[0]["status"] in ("optimal", "infeasible")


class TestWidthCommand:
    def test_width_of_bench_decomp(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(json.dumps(BENCH_DECOMP))
        code, out = run_main(["width", str(path)])
        assert code == 0
        assert "tree width: 2" in out

    def test_width_three_node(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(json.dumps(THREE_NODE_DECOMP))
        code, out = run_main(["width", str(path)])
        assert code == 0
        assert "tree width: 1" in out


class TestCheckDecompCommand:
    def test_valid_decomp(self, tmp_path, worked_dir):
        prog, _, decomp = worked_dir
        code, out = run_main(["check-decomp", str(decomp), "--program", str(prog)])
        assert code == 0
        assert "valid" in out
        assert "compatible" in out

    def test_invalid_decomp(self, tmp_path):
        bad = dict(THREE_NODE_DECOMP)
        bad["nodes"] = [{"id": 0, "bag": ["x"]}, {"id": 1, "bag": ["y"]},
                        {"id": 2, "bag": ["x"]}]
        bad["edges"] = [[0, 1], [1, 2]]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        code, _ = run_main(["check-decomp", str(path)])
        assert code == 3

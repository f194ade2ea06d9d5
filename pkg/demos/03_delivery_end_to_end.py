"""The delivery program end to end: answer-variable vs bag-variable LPs.

    python demos/03_delivery_end_to_end.py
"""

from pathlib import Path

from lpcq import load_database, parse, run_pipeline, solution_to_weights

here = Path(__file__).parent / "delivery"
program = parse((here / "delivery.lpcq").read_text())
db = load_database(here / "data")

# one LP variable per feasible delivery
cp, nat_ilp, nat_sol, nat_report = run_pipeline(program, db, "natural")
print("\n".join(nat_report.lines()))

# bag variables on the decomposition tree instead; same optimum
cp, fac_ilp, fac_sol, fac_report = run_pipeline(
    program, db, "factorized", decomp_path=str(here / "decomp.json")
)
print()
print("\n".join(fac_report.lines()))
assert abs(nat_report.value - fac_report.value) < 1e-6

# the factorized solution lifts back to one weight per delivery
print("\nshipment plan (factorized solution, reconstructed):")
for key in cp.queries_w():
    weighting = solution_to_weights(fac_sol, fac_ilp, key, db)
    for assignment, units in weighting.items():
        if units > 1e-9:
            plan = ", ".join(f"{k}={v.text}" for k, v in assignment.items())
            print(f"  {plan}: {units:g} units")

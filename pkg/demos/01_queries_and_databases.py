"""Loading CSV databases and evaluating conjunctive queries.

Run from the repository root after `pip install -e .`:

    python demos/01_queries_and_databases.py
"""

from pathlib import Path

from lpcq import evaluate, free_vars, load_database, parse_query, qf

here = Path(__file__).parent
db = load_database(here / "delivery" / "data")
print(db)
print("domain sample:", [v.text for v in db.sorted_domain()[:6]], "...")

# a query is just text; identifiers may carry primes, constants are quoted
q = parse_query('exists c. route(f, "w1", c)')
print("\nfactories that can reach warehouse w1 directly:")
for answer in evaluate(q, db).assignments():
    print("  ", answer)

# the delivery join: who can ship what to whom through which warehouse
dlr = parse_query(
    "exists q, q2, c, c2. "
    "prod(f', o', q) /\\ order(b', o', q2) /\\ route(f', w', c) /\\ route(w', b', c2)"
)
answers = evaluate(dlr, db)
print(f"\n{sorted(free_vars(dlr))} has {len(answers)} feasible deliveries:")
for answer in answers.assignments():
    print("  ", answer)

# the quantifier-free rewrite keeps every column; its answers project back
full = evaluate(qf(dlr), db)
print(f"\nwith costs and quantities kept: {len(full)} rows over {full.variables}")

"""Conjunctive query ASTs, answer-set evaluation, and syntactic operators.

Queries are built from equalities, relational atoms, conjunction, and
existential quantification.  Query identity is exact AST equality: two
queries differing only in a bound-variable name are distinct objects, which
downstream naming schemes rely on.

Evaluation follows set semantics.  ``evaluate(q, db, X)`` returns the set of
assignments of X satisfying q, where variables of X not constrained by q
range over the whole domain.  The implementation joins per-conjunct factors
with hash joins; a brute-force enumerator with the same contract lives in
the test suite and serves as the oracle.

Concrete syntax::

    exists y. R1(x) /\\ R2(y)
    x == "w1" /\\ S(x, 10.5)
    true

Identifiers match [A-Za-z_][A-Za-z0-9_']*; constants are quoted strings or
numeric literals.
"""

from __future__ import annotations

from dataclasses import dataclass
from operator import itemgetter
from typing import Iterable, Iterator

from .errors import (
    ArityMismatchError,
    LengthMismatchError,
    MissingFreeVariableError,
    ParseError,
    UnknownRelationError,
)
from .lexer import TokenStream, tokenize
from .relations import Assignment, Database, Value


# --- AST --------------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class Const:
    value: Value

    def __repr__(self):
        return f"<{self.value.text}>"


Expr = Var | Const


@dataclass(frozen=True)
class Equal:
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Atom:
    relation: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class And:
    left: "Query"
    right: "Query"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Query"


@dataclass(frozen=True)
class TrueQuery:
    pass


Query = Equal | Atom | And | Exists | TrueQuery
TRUE = TrueQuery()


def conjoin(parts: Iterable[Query]) -> Query:
    """Left-associated conjunction of *parts*; empty input gives true."""
    result: Query | None = None
    for part in parts:
        result = part if result is None else And(result, part)
    return TRUE if result is None else result


def conjuncts(q: Query) -> list[Query]:
    """Flatten nested conjunction into a list (true disappears)."""
    out: list[Query] = []
    stack = [q]
    while stack:
        node = stack.pop()
        if isinstance(node, And):
            stack.append(node.right)
            stack.append(node.left)
        elif not isinstance(node, TrueQuery):
            out.append(node)
    return out


def free_vars(q: Query) -> frozenset[str]:
    if isinstance(q, TrueQuery):
        return frozenset()
    if isinstance(q, Equal):
        out = set()
        for e in (q.left, q.right):
            if isinstance(e, Var):
                out.add(e.name)
        return frozenset(out)
    if isinstance(q, Atom):
        return frozenset(e.name for e in q.args if isinstance(e, Var))
    if isinstance(q, And):
        return free_vars(q.left) | free_vars(q.right)
    if isinstance(q, Exists):
        return free_vars(q.body) - {q.var}
    raise TypeError(f"not a query: {q!r}")


def all_vars(q: Query) -> frozenset[str]:
    """Free and bound variable names appearing anywhere in q."""
    if isinstance(q, Exists):
        return all_vars(q.body) | {q.var}
    if isinstance(q, And):
        return all_vars(q.left) | all_vars(q.right)
    return free_vars(q)


def substitute(q: Query, variables: Iterable[str], constants: Iterable[Value]) -> Query:
    """Replace free occurrences of each variable by the matching constant."""
    variables = list(variables)
    constants = list(constants)
    if len(variables) != len(constants):
        raise LengthMismatchError(
            f"{len(variables)} variables vs {len(constants)} constants"
        )
    if len(set(variables)) != len(variables):
        raise LengthMismatchError("substituted variables must be pairwise distinct")
    mapping = dict(zip(variables, constants))

    def walk(node: Query, active: dict[str, Value]) -> Query:
        if isinstance(node, TrueQuery) or not active:
            return node
        if isinstance(node, Equal):
            return Equal(_subst_expr(node.left, active), _subst_expr(node.right, active))
        if isinstance(node, Atom):
            return Atom(node.relation, tuple(_subst_expr(e, active) for e in node.args))
        if isinstance(node, And):
            return And(walk(node.left, active), walk(node.right, active))
        if isinstance(node, Exists):
            inner = {k: v for k, v in active.items() if k != node.var}
            return Exists(node.var, walk(node.body, inner))
        raise TypeError(f"not a query: {node!r}")

    return walk(q, mapping)


def _subst_expr(e: Expr, mapping: dict[str, Value]) -> Expr:
    if isinstance(e, Var) and e.name in mapping:
        return Const(mapping[e.name])
    return e


def extend(q: Query, variables: Iterable[str]) -> Query:
    """Conjoin ``x == x`` for each listed variable not already free in q."""
    fv = free_vars(q)
    extras = [Equal(Var(x), Var(x)) for x in variables if x not in fv]
    if not extras:
        return q
    result = extras[0]
    for extra in extras[1:]:
        result = And(result, extra)
    return And(result, q)


def rename_bound(q: Query, taken: set[str]) -> Query:
    """Rename bound variables so they avoid *taken* and each other."""
    used = set(taken) | all_vars(q)

    def fresh(base: str) -> str:
        i = 1
        cand = f"{base}_{i}"
        while cand in used:
            i += 1
            cand = f"{base}_{i}"
        used.add(cand)
        return cand

    def walk(node: Query, ren: dict[str, str]) -> Query:
        if isinstance(node, TrueQuery):
            return node
        if isinstance(node, Equal):
            return Equal(_rename_expr(node.left, ren), _rename_expr(node.right, ren))
        if isinstance(node, Atom):
            return Atom(node.relation, tuple(_rename_expr(e, ren) for e in node.args))
        if isinstance(node, And):
            return And(walk(node.left, ren), walk(node.right, ren))
        if isinstance(node, Exists):
            name = node.var
            if name in taken:
                new = fresh(name)
            else:
                new = name
                taken.add(name)
            inner = dict(ren)
            inner[name] = new
            return Exists(new, walk(node.body, inner))
        raise TypeError(f"not a query: {node!r}")

    taken = set(taken)
    return walk(q, {})


def _rename_expr(e: Expr, ren: dict[str, str]) -> Expr:
    if isinstance(e, Var) and e.name in ren:
        return Var(ren[e.name])
    return e


def prenex(q: Query) -> tuple[list[str], Query]:
    """Hoist all existential quantifiers to a prefix.

    Bound variables are renamed apart from every other variable in the query
    first, so hoisting cannot capture.  Returns the prefix in left-to-right
    source order plus the quantifier-free body.
    """
    clean = rename_bound(q, set(free_vars(q)))
    prefix: list[str] = []

    def strip(node: Query) -> Query:
        if isinstance(node, Exists):
            prefix.append(node.var)
            return strip(node.body)
        if isinstance(node, And):
            return And(strip(node.left), strip(node.right))
        return node

    body = strip(clean)
    return prefix, body


def is_quantifier_free(q: Query) -> bool:
    if isinstance(q, Exists):
        return False
    if isinstance(q, And):
        return is_quantifier_free(q.left) and is_quantifier_free(q.right)
    return True


def qf(q: Query) -> Query:
    """Quantifier-free variant preserving the full (unprojected) answer set.

    The body is conjoined with ``y == y`` for each quantified variable, in
    quantifier order, so queries with distinct prefixes stay syntactically
    distinct after the rewrite.
    """
    if is_quantifier_free(q):
        return q
    prefix, body = prenex(q)
    result = body
    for var in prefix:
        result = And(result, Equal(Var(var), Var(var)))
    return result


def canonical_form(q: Query) -> tuple[Query, dict[str, str]]:
    """Alpha-invariant form: bound variables become positional placeholders.

    Returns the renamed query plus the placeholder -> original-name mapping,
    which lets callers align bound variables of two alpha-equivalent queries.
    """
    counter = [0]
    mapping: dict[str, str] = {}

    def walk(node: Query, ren: dict[str, str]) -> Query:
        if isinstance(node, TrueQuery):
            return node
        if isinstance(node, Equal):
            return Equal(_rename_expr(node.left, ren), _rename_expr(node.right, ren))
        if isinstance(node, Atom):
            return Atom(node.relation, tuple(_rename_expr(e, ren) for e in node.args))
        if isinstance(node, And):
            return And(walk(node.left, ren), walk(node.right, ren))
        if isinstance(node, Exists):
            placeholder = f"__b{counter[0]}"
            counter[0] += 1
            mapping[placeholder] = node.var
            inner = dict(ren)
            inner[node.var] = placeholder
            return Exists(placeholder, walk(node.body, inner))
        raise TypeError(f"not a query: {node!r}")

    return walk(q, {}), mapping


# --- answer sets -------------------------------------------------------------

def _row_sort_key(row: tuple[Value, ...]) -> tuple[str, ...]:
    return tuple(v.text for v in row)


class AnswerSet:
    """Set of assignments over an ordered variable tuple.

    Rows are value tuples aligned with ``variables`` (sorted by name) and are
    kept sorted by text for deterministic iteration; consumers must not read
    meaning into the order.
    """

    __slots__ = ("variables", "rows", "_member_cache")

    def __init__(self, variables: Iterable[str], rows: Iterable[tuple[Value, ...]]):
        self.variables = tuple(sorted(variables))
        unique = rows if isinstance(rows, set) else set(rows)
        self.rows = sorted(unique, key=_row_sort_key)
        self._member_cache: set | None = None

    def _members(self) -> set:
        if self._member_cache is None:
            self._member_cache = set(self.rows)
        return self._member_cache

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[tuple[Value, ...]]:
        return iter(self.rows)

    def __contains__(self, item) -> bool:
        if isinstance(item, Assignment):
            if item.variables != self.variables:
                return False
            return item.values in self._members()
        return item in self._members()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, AnswerSet)
            and self.variables == other.variables
            and self.rows == other.rows
        )

    def __hash__(self):
        return hash((self.variables, tuple(self.rows)))

    def assignments(self) -> Iterator[Assignment]:
        for row in self.rows:
            yield Assignment(self.variables, row)

    def to_set(self) -> set[Assignment]:
        return {Assignment(self.variables, row) for row in self.rows}

    def restrict(self, variables: Iterable[str]) -> "AnswerSet":
        wanted = tuple(sorted(set(variables)))
        if not set(wanted) <= set(self.variables):
            raise MissingFreeVariableError(
                f"cannot restrict {self.variables} to {wanted}"
            )
        if wanted == self.variables:
            return self
        idx = [self.variables.index(v) for v in wanted]
        if not idx:
            rows: set[tuple[Value, ...]] = {()} if self.rows else set()
            return AnswerSet((), rows)
        getter = itemgetter(*idx)
        if len(idx) == 1:
            return AnswerSet(wanted, {(getter(row),) for row in self.rows})
        return AnswerSet(wanted, {getter(row) for row in self.rows})

    def group_by(self, variables: Iterable[str]) -> dict[tuple[Value, ...], list[int]]:
        """Row indices grouped by their projection to *variables* (sorted order)."""
        wanted = tuple(sorted(set(variables)))
        idx = [self.variables.index(v) for v in wanted]
        groups: dict[tuple[Value, ...], list[int]] = {}
        if not idx:
            groups[()] = list(range(len(self.rows)))
            return groups
        getter = itemgetter(*idx)
        single = len(idx) == 1
        for i, row in enumerate(self.rows):
            key = (getter(row),) if single else getter(row)
            groups.setdefault(key, []).append(i)
        return groups

    def __repr__(self) -> str:
        return f"AnswerSet({self.variables}, {len(self.rows)} rows)"


# --- evaluation ---------------------------------------------------------------

class _Factor:
    """Intermediate relation over a tuple of distinct variables."""

    __slots__ = ("vars", "rows")

    def __init__(self, vars: tuple[str, ...], rows: list[tuple[Value, ...]]):
        self.vars = vars
        self.rows = rows

    def __len__(self):
        return len(self.rows)


def _atom_factor(atom: Atom, db: Database) -> _Factor:
    """Project an atom's relation to its distinct variables, applying constant
    and repeated-variable filters.  A ground atom yields a nullary factor
    whose emptiness decides satisfiability."""
    rel = db.relation(atom.relation)
    if rel is None:
        raise UnknownRelationError(f"relation {atom.relation!r} not in database")
    if rel.arity != len(atom.args):
        raise ArityMismatchError(
            f"{atom.relation}/{rel.arity} used with {len(atom.args)} arguments"
        )
    positions: dict[str, list[int]] = {}
    consts: list[tuple[int, Value]] = []
    for i, arg in enumerate(atom.args):
        if isinstance(arg, Var):
            positions.setdefault(arg.name, []).append(i)
        else:
            consts.append((i, arg.value))
    var_order = tuple(positions)
    rows = set()
    for row in rel.tuples:
        if any(row[i] is not v for i, v in consts):
            continue
        ok = True
        for pos_list in positions.values():
            first = row[pos_list[0]]
            if any(row[p] is not first for p in pos_list[1:]):
                ok = False
                break
        if ok:
            rows.add(tuple(row[pos[0]] for pos in positions.values()))
    if not var_order:
        # ground atom: empty factor means the whole query is unsatisfiable
        return _Factor((), [()] if rows else [])
    return _Factor(var_order, list(rows))


def _join(a: _Factor, b: _Factor) -> _Factor:
    shared = [v for v in a.vars if v in b.vars]
    extra = [v for v in b.vars if v not in a.vars]
    out_vars = a.vars + tuple(extra)
    if not shared:
        rows = [ra + rb_proj for rb_proj in _project_rows(b, extra) for ra in a.rows]
        return _Factor(out_vars, rows)

    a_key = [a.vars.index(v) for v in shared]
    b_key = [b.vars.index(v) for v in shared]
    b_extra = [b.vars.index(v) for v in extra]
    buckets: dict[tuple, list[tuple]] = {}
    for row in b.rows:
        key = tuple(row[i] for i in b_key)
        buckets.setdefault(key, []).append(tuple(row[i] for i in b_extra))
    rows = []
    append = rows.append
    for row in a.rows:
        key = tuple(row[i] for i in a_key)
        hit = buckets.get(key)
        if hit:
            for tail in hit:
                append(row + tail)
    return _Factor(out_vars, rows)


def _project_rows(f: _Factor, variables: list[str]) -> list[tuple]:
    idx = [f.vars.index(v) for v in variables]
    if not idx:
        return [()] if f.rows else []
    return [tuple(row[i] for i in idx) for row in f.rows]


def query_factors(body: Query, db: Database, needed_vars: Iterable[str]) -> list[_Factor] | None:
    """Decompose a quantifier-free body into joinable factors.

    Adds full-domain factors for variables of *needed_vars* not otherwise
    constrained (the semantics of unconstrained variables and of x == x).
    Returns None when a ground conjunct is false.
    """
    factors: list[_Factor] = []
    domain_vars: set[str] = set()
    for part in conjuncts(body):
        if isinstance(part, Atom):
            f = _atom_factor(part, db)
            if f.vars == () and not f.rows:
                return None
            if f.vars:
                factors.append(f)
        elif isinstance(part, Equal):
            left, right = part.left, part.right
            if isinstance(left, Const) and isinstance(right, Const):
                if left.value is not right.value:
                    return None
            elif isinstance(left, Var) and isinstance(right, Var):
                if left.name == right.name:
                    domain_vars.add(left.name)
                else:
                    diag = [(v, v) for v in db.domain]
                    factors.append(_Factor((left.name, right.name), diag))
            else:
                var = left if isinstance(left, Var) else right
                const = right if isinstance(right, Const) else left
                assert isinstance(var, Var) and isinstance(const, Const)
                rows = [(const.value,)] if const.value in db.domain else []
                factors.append(_Factor((var.name,), rows))
        else:
            raise TypeError(f"body is not quantifier-free: {part!r}")

    covered = set()
    for f in factors:
        covered.update(f.vars)
    for v in sorted(set(needed_vars) | domain_vars):
        if v not in covered:
            factors.append(_Factor((v,), [(d,) for d in db.domain]))
    return factors


def join_factors(factors: list[_Factor]) -> _Factor:
    """Greedy hash-join plan: start small, prefer connected factors."""
    if not factors:
        return _Factor((), [()])
    pending = sorted(factors, key=len)
    current = pending.pop(0)
    while pending:
        best = None
        best_rank = None
        for i, f in enumerate(pending):
            shared = sum(1 for v in f.vars if v in current.vars)
            rank = (-min(shared, 1), len(f))
            if best_rank is None or rank < best_rank:
                best_rank = rank
                best = i
        nxt = pending.pop(best)
        current = _join(current, nxt)
        if not current.rows:
            # keep the full variable tuple so projection stays well-defined
            tail = list(current.vars)
            for f in pending:
                tail.extend(v for v in f.vars if v not in tail)
            return _Factor(tuple(tail), [])
    return current


def evaluate(q: Query, db: Database, variables: Iterable[str] | None = None) -> AnswerSet:
    """Answer set of q over db for a variable set X covering fv(q).

    Existential quantifiers evaluate as projections of the extended
    evaluation; variables of X unconstrained by q range over the domain.
    """
    fv = free_vars(q)
    X = frozenset(variables) if variables is not None else fv
    if not fv <= X:
        raise MissingFreeVariableError(
            f"variable set {sorted(X)} misses free variables {sorted(fv - X)}"
        )
    prefix, body = prenex(q)
    # prefix names were renamed apart from fv; keep X's names untouched
    eval_vars = set(X) | set(prefix)
    factors = query_factors(body, db, eval_vars)
    if factors is None:
        return AnswerSet(X, [])
    joined = join_factors(factors)

    target = tuple(sorted(X))
    idx = []
    for v in target:
        idx.append(joined.vars.index(v))
    if not target:
        rows: set[tuple[Value, ...]] = {()} if joined.rows else set()
        return AnswerSet((), rows)
    getter = itemgetter(*idx)
    if len(idx) == 1:
        projected = {(getter(row),) for row in joined.rows}
    else:
        projected = {getter(row) for row in joined.rows}
    return AnswerSet(target, projected)


# --- concrete syntax ----------------------------------------------------------

def parse_query(text: str) -> Query:
    stream = TokenStream(tokenize(text))
    q = parse_query_tokens(stream)
    stream.expect("EOF")
    return q


def parse_query_tokens(stream: TokenStream) -> Query:
    """Parse a query from the current stream position.

    ``exists`` extends as far right as possible; conjunction stops at the
    first token that cannot continue a query, which lets enclosing grammars
    place their own '.' after an embedded query.
    """
    if stream.at_name("exists"):
        stream.next()
        names = [stream.expect("NAME").text]
        while stream.accept("OP", ","):
            names.append(stream.expect("NAME").text)
        stream.expect("OP", ".")
        body = parse_query_tokens(stream)
        for name in reversed(names):
            body = Exists(name, body)
        return body
    node = _parse_query_primary(stream)
    while stream.at("OP", "/\\"):
        stream.next()
        if stream.at_name("exists"):
            rhs = parse_query_tokens(stream)
            return And(node, rhs)
        node = And(node, _parse_query_primary(stream))
    return node


def _parse_query_primary(stream: TokenStream) -> Query:
    tok = stream.peek()
    if stream.at_name("true"):
        stream.next()
        return TRUE
    if stream.at("OP", "("):
        stream.next()
        inner = parse_query_tokens(stream)
        stream.expect("OP", ")")
        return inner
    if tok.kind == "NAME" and stream.peek(1).kind == "OP" and stream.peek(1).text == "(":
        name = stream.next().text
        stream.next()  # (
        args: list[Expr] = []
        if not stream.at("OP", ")"):
            args.append(_parse_query_expr(stream))
            while stream.accept("OP", ","):
                args.append(_parse_query_expr(stream))
        stream.expect("OP", ")")
        return Atom(name, tuple(args))
    left = _parse_query_expr(stream)
    stream.expect("OP", "==")
    right = _parse_query_expr(stream)
    return Equal(left, right)


def _parse_query_expr(stream: TokenStream) -> Expr:
    tok = stream.peek()
    if tok.kind == "NAME":
        stream.next()
        return Var(tok.text)
    if tok.kind == "NUMBER":
        stream.next()
        return Const(Value(tok.text))
    if tok.kind == "STRING":
        stream.next()
        return Const(Value(tok.text))
    if tok.kind == "OP" and tok.text == "-" and stream.peek(1).kind == "NUMBER":
        stream.next()
        num = stream.next()
        return Const(Value("-" + num.text))
    raise ParseError(f"expected a variable or constant, found {tok.text!r}", tok.span)


def format_query(q: Query) -> str:
    """Concrete-syntax rendering; parse_query(format_query(q)) == q."""
    if isinstance(q, TrueQuery):
        return "true"
    if isinstance(q, Equal):
        return f"{_format_expr(q.left)} == {_format_expr(q.right)}"
    if isinstance(q, Atom):
        return f"{q.relation}({', '.join(_format_expr(a) for a in q.args)})"
    if isinstance(q, And):
        left = format_query(q.left)
        if isinstance(q.left, Exists):
            left = f"({left})"
        right = format_query(q.right)
        if isinstance(q.right, Exists):
            right = f"({right})"
        return f"{left} /\\ {right}"
    if isinstance(q, Exists):
        names = [q.var]
        body = q.body
        while isinstance(body, Exists):
            names.append(body.var)
            body = body.body
        return f"exists {', '.join(names)}. {format_query(body)}"
    raise TypeError(f"not a query: {q!r}")


def _format_expr(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    text = e.value.text
    if e.value.numeric is not None:
        return text
    escaped = text.replace('"', '""')
    return f'"{escaped}"'

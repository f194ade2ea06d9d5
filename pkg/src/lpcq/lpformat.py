"""CPLEX-LP-format export and a matching reader.

The writer emits Maximize/Minimize, Subject To, and End sections; variable
bounds stay implicit since every variable is nonnegative by convention,
which is also the LP-format default.  Variable names outside the safe
charset (or overlong ones) are replaced by v<i>, with the mapping written to
``<path>.names.json`` alongside the program.

The reader accepts what the writer emits, plus the usual small variations
(>=, implicit 1 coefficients, constants on either side), so files round
trip up to term ordering.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .errors import IoError
from .linprog import LinConstraint, LinearProgram, LinSum

_SAFE_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_MAX_NAME = 200

_REL_OPS = {"<=", ">=", "=<", "=>", "=", "<", ">"}

_SECTION_WORDS = {
    "maximize": "maximize", "maximise": "maximize", "max": "maximize",
    "minimize": "minimize", "minimise": "minimize", "min": "minimize",
    "subject": "subject",
    "bounds": "bounds", "bound": "bounds",
    "end": "end",
    "general": "skip", "generals": "skip", "binary": "skip", "binaries": "skip",
}


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _sanitize(variables: list[str]) -> tuple[dict[str, str], dict[str, str]]:
    """Map original names to LP-safe ones; returns (to_lp, renamed_only)."""
    to_lp: dict[str, str] = {}
    renamed: dict[str, str] = {}
    counter = 0
    taken = set(variables)
    for name in variables:
        if _SAFE_NAME.match(name) and len(name) <= _MAX_NAME and name.lower() not in _SECTION_WORDS:
            to_lp[name] = name
        else:
            counter += 1
            fresh = f"v{counter}"
            while fresh in taken:
                counter += 1
                fresh = f"v{counter}"
            taken.add(fresh)
            to_lp[name] = fresh
            renamed[fresh] = name
    return to_lp, renamed


def _format_sum(s: LinSum, to_lp: dict[str, str], with_constant: bool) -> str:
    parts: list[str] = []
    for var in sorted(s.terms):
        coeff = s.terms[var]
        sign = "-" if coeff < 0 else "+"
        mag = abs(coeff)
        chunk = to_lp[var] if mag == 1.0 else f"{_fmt(mag)} {to_lp[var]}"
        if not parts and sign == "+":
            parts.append(chunk)
        else:
            parts.append(f"{sign} {chunk}")
    if with_constant and s.constant != 0.0:
        sign = "-" if s.constant < 0 else "+"
        if not parts and sign == "+":
            parts.append(_fmt(s.constant))
        else:
            parts.append(f"{sign} {_fmt(abs(s.constant))}")
    if not parts:
        parts.append(_fmt(s.constant) if with_constant else "0")
    return " ".join(parts)


def export_lp(lp: LinearProgram, path: str | Path) -> None:
    """Write *lp* in LP format; emits <path>.names.json with renamed variables."""
    path = Path(path)
    variables = lp.variables()
    to_lp, renamed = _sanitize(variables)

    lines = ["\\ exported linear program"]
    lines.append("Maximize" if lp.sense == "maximize" else "Minimize")
    lines.append(f" obj: {_format_sum(lp.objective, to_lp, with_constant=True)}")
    lines.append("Subject To")
    for i, con in enumerate(lp.constraints, start=1):
        coeffs, rel, bound = con.normalized()
        row = LinSum(0.0, coeffs)
        op = "=" if rel == "=" else "<="
        lines.append(f" c{i}: {_format_sum(row, to_lp, with_constant=False)} {op} {_fmt(bound)}")
    used = set(lp.objective.variables())
    for con in lp.constraints:
        used.update(con.variables())
    unused = [v for v in variables if v not in used]
    if unused:
        # nonnegativity is implicit; listing keeps unused variables in the file
        lines.append("Bounds")
        for v in unused:
            lines.append(f" {to_lp[v]} >= 0")
    lines.append("End")
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        Path(str(path) + ".names.json").write_text(
            json.dumps(renamed, indent=2, sort_keys=True), encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(str(exc)) from exc


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>[0-9]+(?:\.[0-9]*)?(?:[eE][+-]?[0-9]+)?|\.[0-9]+)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.']*)"
    r"|(?P<op><=|>=|=<|=>|[:=+<>-]))"
)


def _tokenize_lp(text: str) -> list[str]:
    tokens: list[str] = []
    for raw_line in text.splitlines():
        line = raw_line.split("\\", 1)[0]
        pos = 0
        while pos < len(line):
            if line[pos].isspace():
                pos += 1
                continue
            m = _TOKEN_RE.match(line, pos)
            if not m:
                raise IoError(f"cannot tokenize LP line: {raw_line!r}")
            tokens.append(m.group(0).strip())
            pos = m.end()
    return tokens


class _LpReader:
    def __init__(self, tokens: list[str], renamed: dict[str, str]):
        self.tokens = tokens
        self.low = [t.lower() for t in tokens]
        self.renamed = renamed
        self.i = 0

    def done(self) -> bool:
        return self.i >= len(self.tokens)

    def at_section(self) -> str | None:
        if self.done():
            return "end"
        word = self.low[self.i]
        return _SECTION_WORDS.get(word)

    def expression(self, stop_at_relation: bool) -> LinSum:
        """Parse tokens into a LinSum until a relation or section keyword."""
        constant = 0.0
        terms: dict[str, float] = {}
        sign = 1.0
        pending: float | None = None
        consumed = False

        def flush():
            nonlocal constant, pending, sign
            if pending is not None:
                constant += sign * pending
                pending = None
                sign = 1.0

        while not self.done():
            tok = self.tokens[self.i]
            if self.at_section():
                break
            if tok in _REL_OPS:
                if stop_at_relation:
                    break
                raise IoError(f"unexpected {tok!r} in expression")
            if tok == "+":
                flush()
                self.i += 1
                consumed = True
                continue
            if tok == "-":
                flush()
                sign = -sign
                self.i += 1
                consumed = True
                continue
            if tok == ":":
                raise IoError("misplaced ':'")
            if re.match(r"[0-9.]", tok):
                flush()
                pending = float(tok)
                self.i += 1
                consumed = True
                continue
            # a name followed by ':' is a row label: skip it when leading,
            # otherwise it starts the next row and ends this expression
            if self.i + 1 < len(self.tokens) and self.tokens[self.i + 1] == ":":
                if consumed:
                    break
                self.i += 2
                continue
            consumed = True
            name = self.renamed.get(tok, tok)
            coeff = sign * (pending if pending is not None else 1.0)
            new = terms.get(name, 0.0) + coeff
            if new == 0.0:
                terms.pop(name, None)
            else:
                terms[name] = new
            pending = None
            sign = 1.0
            self.i += 1
        flush()
        return LinSum(constant, terms)


def parse_lp(path: str | Path) -> LinearProgram:
    """Parse an LP-format file; names from <path>.names.json are restored."""
    path = Path(path)
    try:
        tokens = _tokenize_lp(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(str(exc)) from exc
    renamed: dict[str, str] = {}
    sidecar = Path(str(path) + ".names.json")
    if sidecar.exists():
        renamed = json.loads(sidecar.read_text(encoding="utf-8"))

    reader = _LpReader(tokens, renamed)
    section = reader.at_section()
    if section not in ("maximize", "minimize"):
        raise IoError("LP file must start with Maximize or Minimize")
    sense = section
    reader.i += 1

    objective = reader.expression(stop_at_relation=False)

    if reader.at_section() != "subject":
        raise IoError("missing Subject To section")
    reader.i += 1
    if not reader.done() and reader.low[reader.i] == "to":
        reader.i += 1

    constraints: list[LinConstraint] = []
    declared: set[str] = set()
    while not reader.done() and reader.at_section() is None:
        lhs = reader.expression(stop_at_relation=True)
        if reader.done() or reader.tokens[reader.i] not in _REL_OPS:
            raise IoError("constraint missing relation")
        rel = reader.tokens[reader.i]
        reader.i += 1
        rhs = reader.expression(stop_at_relation=True)
        if rel in ("<=", "<", "=<"):
            constraints.append(LinConstraint(lhs, "<=", rhs))
        elif rel in (">=", ">", "=>"):
            constraints.append(LinConstraint(rhs, "<=", lhs))
        else:
            constraints.append(LinConstraint(lhs, "=", rhs))

    while not reader.done() and reader.at_section() != "end":
        if reader.at_section() in ("bounds", "skip"):
            reader.i += 1
            continue
        lhs = reader.expression(stop_at_relation=True)
        declared.update(lhs.variables())
        if not reader.done() and reader.tokens[reader.i] in _REL_OPS:
            reader.i += 1
            rhs = reader.expression(stop_at_relation=True)
            declared.update(rhs.variables())
            for side in (lhs, rhs):
                if side.constant != 0.0 and not side.terms:
                    raise IoError("only nonnegativity bounds are supported")

    return LinearProgram(sense, objective, constraints, declared=declared)

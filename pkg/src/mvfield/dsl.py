"""Reader for ``.prob`` problem files.

A file is a sequence of blocks ``name { ... }``.  Statements inside a block
are separated by newlines or semicolons; ``#`` starts a comment::

    bundle { base = [x1, x2]; fiber = [y1, y2] }
    multivector {
      Y1 = d/dx1 + (y1 - x1 - x2) * d/dy1 + (-y2 + x1 + x2) * d/dy2
      Y2 = d/dx2 + (y1^2 - x1^2 - x2^2 - 2*x1 - 2*x2 - 2*x1*x2) * d/dy1 + d/dy2
    }
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from pathlib import Path

import sympy

from . import symcore
from .forms import AdaptedForm, volume_minus
from .geometry import ChartSpec, DecomposableMVF, VectorField

BLOCKS = ("bundle", "multivector", "connection", "lagrangian", "symmetry", "section", "numeric", "assignment")


class ProblemError(ValueError):
    """Input error in a problem file, carrying file and line."""

    def __init__(self, message: str, path: str = "<input>", line: int | None = None):
        self.path, self.line = path, line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


@dataclass
class Statement:
    key: str
    value: str
    line: int


@dataclass
class ProblemFile:
    path: str
    chart: ChartSpec
    multivector: list[tuple[str, VectorField]] | None = None
    connection: dict | None = None
    lagrangian: sympy.Expr | None = None
    symmetry: dict | None = None
    section: list[sympy.Expr] | None = None
    numeric: dict = field(default_factory=dict)
    assignment: dict[str, sympy.Expr] | None = None
    blocks: tuple[str, ...] = ()

    def require(self, *names: str) -> None:
        for n in names:
            if n not in self.blocks:
                raise ProblemError(f"this command needs a {n} block", self.path)

    def mvf(self) -> DecomposableMVF:
        if not self.multivector:
            raise ProblemError("multivector block is empty", self.path)
        return DecomposableMVF(self.chart, tuple(v for _, v in self.multivector))


_BLOCK_RE = re.compile(r"([A-Za-z_]+)\s*\{")
_D_RE = re.compile(r"d/d([A-Za-z][A-Za-z0-9_]*)")
_INDEXED_RE = re.compile(r"^([A-Za-z]+)\s*\[([^\]]*)\]$")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("#", 1)[0] for line in text.splitlines())


def _split_blocks(text: str, path: str) -> list[tuple[str, list[Statement], int]]:
    text = _strip_comments(text)
    out = []
    pos = 0
    while True:
        rest = text[pos:]
        if not rest.strip():
            break
        m = _BLOCK_RE.match(text, pos + len(rest) - len(rest.lstrip()))
        start_line = text.count("\n", 0, pos + len(rest) - len(rest.lstrip())) + 1
        if m is None:
            raise ProblemError("expected a block 'name { ... }'", path, start_line)
        name = m.group(1)
        depth, i = 1, m.end()
        while i < len(text) and depth:
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
            i += 1
        if depth:
            raise ProblemError(f"unterminated block {name!r}", path, start_line)
        body_start = m.end()
        body = text[body_start:i - 1]
        stmts = []
        line = text.count("\n", 0, body_start) + 1
        for raw_line in body.split("\n"):
            for piece in raw_line.split(";"):
                piece = piece.strip()
                if not piece:
                    continue
                if "=" not in piece:
                    raise ProblemError(f"expected 'key = value', got {piece!r}", path, line)
                key, value = piece.split("=", 1)
                stmts.append(Statement(key.strip(), value.strip(), line))
            line += 1
        out.append((name, stmts, start_line))
        pos = i
    return out


def _name_list(st: Statement, path: str) -> list[str]:
    v = st.value.strip()
    if not (v.startswith("[") and v.endswith("]")):
        raise ProblemError(f"{st.key} must be a bracketed list", path, st.line)
    names = [n.strip() for n in v[1:-1].split(",") if n.strip()]
    for n in names:
        if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", n):
            raise ProblemError(f"bad coordinate name {n!r}", path, st.line)
    return names


def _expr(text: str, allowed, path: str, line: int) -> sympy.Expr:
    try:
        return symcore.parse(text, allowed)
    except symcore.ExprError as exc:
        raise ProblemError(str(exc), path, line) from None


def parse_vector_field(text: str, chart: ChartSpec, path: str = "<input>", line: int | None = None) -> VectorField:
    """``d/dq`` symbols times coefficients; the expression must be linear in them."""
    marks = {}

    def repl(m):
        q = m.group(1)
        if q not in chart.coords:
            raise ProblemError(f"d/d{q}: {q!r} is not a coordinate", path, line)
        marks[q] = f"Dpartial__{q}"
        return marks[q]

    body = _D_RE.sub(repl, text)
    e = _expr(body, set(chart.allowed) | set(marks.values()), path, line)
    syms = {q: sympy.Symbol(s) for q, s in marks.items()}
    comps = {}
    rest = sympy.expand(e)
    for q, s in syms.items():
        c = sympy.diff(e, s)
        if c.free_symbols & set(syms.values()):
            raise ProblemError("vector field is not linear in the d/d symbols", path, line)
        comps[q] = c
        rest = rest - sympy.expand(c * s)
    if symcore.normalize(rest) != 0:
        raise ProblemError("vector field has a term without a d/d factor", path, line)
    return VectorField(chart, comps)


def _literal(st: Statement, path: str):
    try:
        return ast.literal_eval(st.value)
    except (ValueError, SyntaxError):
        raise ProblemError(f"bad value for {st.key}: {st.value!r}", path, st.line) from None


def parse_problem(text: str, path: str = "<input>") -> ProblemFile:
    blocks = _split_blocks(text, path)
    names = [b[0] for b in blocks]
    for name, _, line in blocks:
        if name not in BLOCKS:
            raise ProblemError(f"unknown block {name!r}", path, line)
    for name in set(names):
        if names.count(name) > 1:
            raise ProblemError(f"block {name!r} appears more than once", path)
    if names.count("bundle") != 1:
        raise ProblemError("exactly one bundle block is required", path)
    table = {name: (stmts, line) for name, stmts, line in blocks}

    base = fiber = None
    jet = None
    params: list[str] = []
    for st in table["bundle"][0]:
        if st.key == "base":
            base = _name_list(st, path)
        elif st.key == "fiber":
            fiber = _name_list(st, path)
        elif st.key == "params":
            params = _name_list(st, path)
        elif st.key == "jet":
            if st.value not in ("true", "false"):
                raise ProblemError("jet must be true or false", path, st.line)
            jet = st.value == "true"
        else:
            raise ProblemError(f"unknown bundle field {st.key!r}", path, st.line)
    if not base or not fiber:
        raise ProblemError("bundle block needs base and fiber lists", path, table["bundle"][1])
    if jet is None:
        jet = bool({"lagrangian", "symmetry"} & set(names)) or _connection_is_jet(table.get("connection"))
    try:
        chart = ChartSpec.make(base, fiber, jet=jet, params=params)
    except ValueError as exc:
        raise ProblemError(str(exc), path, table["bundle"][1]) from None
    prob = ProblemFile(path, chart, blocks=tuple(names))

    if "multivector" in table:
        prob.multivector = [(st.key, parse_vector_field(st.value, chart, path, st.line))
                            for st in table["multivector"][0]]
    if "connection" in table:
        prob.connection = _parse_connection(table["connection"][0], chart, path)
    if "lagrangian" in table:
        stmts = table["lagrangian"][0]
        if len(stmts) != 1 or stmts[0].key != "L":
            raise ProblemError("lagrangian block holds exactly one 'L = ...'", path, table["lagrangian"][1])
        prob.lagrangian = _expr(stmts[0].value, chart.allowed, path, stmts[0].line)
    if "symmetry" in table:
        prob.symmetry = _parse_symmetry(table["symmetry"][0], chart, path)
    if "section" in table:
        vals = {}
        for st in table["section"][0]:
            if st.key not in chart.fiber:
                raise ProblemError(f"section assigns {st.key!r}, not a fiber coordinate", path, st.line)
            vals[st.key] = _expr(st.value, set(chart.base) | set(chart.params), path, st.line)
        missing = [y for y in chart.fiber if y not in vals]
        if missing:
            raise ProblemError(f"section block misses {missing}", path, table["section"][1])
        prob.section = [vals[y] for y in chart.fiber]
    if "numeric" in table:
        prob.numeric = {st.key: _literal(st, path) for st in table["numeric"][0]}
    if "assignment" in table:
        prob.assignment = {st.key: _expr(st.value, None, path, st.line) for st in table["assignment"][0]}
    return prob


def _connection_is_jet(entry) -> bool:
    if entry is None:
        return False
    kinds = {m.group(1) for st in entry[0] if (m := _INDEXED_RE.match(st.key))}
    return bool(kinds & {"F", "G"})


def _parse_connection(stmts: list[Statement], chart: ChartSpec, path: str) -> dict:
    m, N = chart.m, chart.N
    gamma = [[None] * m for _ in range(N)]
    F = [[None] * m for _ in range(N)]
    G = [[[None] * m for _ in range(m)] for _ in range(N)]
    kinds = set()
    for st in stmts:
        mt = _INDEXED_RE.match(st.key)
        if not mt:
            raise ProblemError(f"expected Gamma[y, x], F[y, x] or G[y, x, x], got {st.key!r}", path, st.line)
        kind, idx = mt.group(1), [s.strip() for s in mt.group(2).split(",")]
        try:
            A = chart.fiber.index(idx[0])
            mus = [chart.base.index(i) for i in idx[1:]]
        except ValueError:
            raise ProblemError(f"unknown index in {st.key!r}", path, st.line) from None
        value = _expr(st.value, chart.allowed, path, st.line)
        if kind == "Gamma" and len(mus) == 1:
            gamma[A][mus[0]] = value
        elif kind == "F" and len(mus) == 1:
            F[A][mus[0]] = value
        elif kind == "G" and len(mus) == 2:
            G[A][mus[0]][mus[1]] = value
        else:
            raise ProblemError(f"bad connection entry {st.key!r}", path, st.line)
        kinds.add(kind)
    if "Gamma" in kinds and kinds - {"Gamma"}:
        raise ProblemError("mix of Gamma and F/G entries", path)
    zero = symcore.ZERO
    if "Gamma" in kinds:
        return {"kind": "connection", "Gamma": [[g if g is not None else zero for g in r] for r in gamma]}
    F = [[F[A][mu] if F[A][mu] is not None else chart.v(A, mu) for mu in range(m)] for A in range(N)]
    G = [[[g if g is not None else zero for g in r] for r in s] for s in G]
    return {"kind": "jetfield", "F": F, "G": G}


def _parse_symmetry(stmts: list[Statement], chart: ChartSpec, path: str) -> dict:
    X = None
    xi = AdaptedForm.zero(chart, chart.m - 1)
    for st in stmts:
        if st.key == "X":
            X = parse_vector_field(st.value, chart, path, st.line)
            continue
        mt = _INDEXED_RE.match(st.key)
        if not mt or mt.group(1) != "xi" or mt.group(2).strip() not in chart.base:
            raise ProblemError(f"expected X = ... or xi[x] = ..., got {st.key!r}", path, st.line)
        mu = chart.base.index(mt.group(2).strip())
        xi = xi + volume_minus(chart, mu).scaled(_expr(st.value, chart.allowed, path, st.line))
    if X is None:
        raise ProblemError("symmetry block needs X = ...", path)
    return {"X": X, "xi": xi}


def load_problem(path: str | Path) -> ProblemFile:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemError(f"cannot read file: {exc.strerror}", str(path)) from None
    return parse_problem(text, str(path))

"""Expression engine: parsing, exact arithmetic, differentiation, zero tests.

Expressions are immutable sympy trees restricted to exact rational
constants, named variables, ``+ - * / ^`` and the unary functions
``sin, cos, exp, log, sqrt``.  Everything else in the package builds on the
handful of functions defined here.
"""

from __future__ import annotations

import enum
import random
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import mpmath
import sympy
from sympy.core.function import AppliedUndef
from sympy.polys.domains import QQ
from sympy.polys.rings import ring
from sympy.printing.str import StrPrinter

Expr = sympy.Expr

FUNCTIONS = {
    "sin": sympy.sin,
    "cos": sympy.cos,
    "exp": sympy.exp,
    "log": sympy.log,
    "sqrt": sympy.sqrt,
}

_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")

ZERO = sympy.Integer(0)
ONE = sympy.Integer(1)


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    """Syntax error; ``offset`` is a byte offset into the UTF-8 source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class UnknownVariableError(ExprError):
    def __init__(self, name: str, offset: int | None = None):
        where = "" if offset is None else f" at byte {offset}"
        super().__init__(f"unknown variable {name!r}{where}")
        self.name = name
        self.offset = offset


class ZeroTestError(ExprError):
    """Numeric zero test could not find enough regular sample points."""


class Verdict(enum.Enum):
    PROVEN_ZERO = "ProvenZero"
    PROVEN_NONZERO = "ProvenNonzero"
    NUMERICALLY_ZERO = "NumericallyZero"
    NUMERICALLY_NONZERO = "NumericallyNonzero"

    @property
    def zero(self) -> bool:
        return self in (Verdict.PROVEN_ZERO, Verdict.NUMERICALLY_ZERO)

    @property
    def numeric(self) -> bool:
        return self in (Verdict.NUMERICALLY_ZERO, Verdict.NUMERICALLY_NONZERO)


@dataclass(frozen=True)
class SimplifyConfig:
    max_degree: int = 64
    samples: int = 20
    tolerance: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")


DEFAULT_CONFIG = SimplifyConfig()


def symbol(name: str) -> sympy.Symbol:
    if not _NAME_RE.fullmatch(name):
        raise ExprError(f"invalid variable name {name!r}")
    return sympy.Symbol(name)


def const(value) -> Expr:
    """Exact rational constant from an int, Fraction or ``"p/q"`` string."""
    if isinstance(value, float):
        raise ExprError("floating-point constants are not allowed in expressions")
    return sympy.Rational(Fraction(value))


# --------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", _byte(text, bad))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _byte(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, allowed: frozenset[str] | None):
        self.text = text
        self.allowed = allowed
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, _byte(self.text, tok[2]))

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] != "op":
            raise self.error(f"expected {value!r}", tok)

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        e = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self):
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            right = self.term()
            left = left + right if op == "+" else left - right
        return left

    def term(self):
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            tok = self.peek()
            right = self.unary()
            if op == "*":
                left = left * right
            else:
                if right == 0:
                    raise self.error("division by zero", tok)
                left = left / right
        return left

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            inner = self.unary()
            return -inner if tok[1] == "-" else inner
        return self.power()

    def power(self):
        base = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            exponent = self.exponent()
            if not exponent.is_Rational:
                raise self.error("exponent must be a rational constant", tok)
            if base == 0 and exponent < 0:
                raise self.error("division by zero", tok)
            return base**exponent
        return base

    def exponent(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            inner = self.exponent()
            return -inner if tok[1] == "-" else inner
        return self.base()

    def base(self):
        tok = self.take()
        kind, value, _ = tok
        if kind == "num":
            return sympy.Integer(int(value))
        if kind == "name":
            if value in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise self.error(f"expected '(' after {value}")
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return FUNCTIONS[value](arg)
            if self.allowed is not None and value not in self.allowed:
                raise UnknownVariableError(value, _byte(self.text, tok[2]))
            return sympy.Symbol(value)
        if kind == "op" and value == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "end":
            raise self.error("unexpected end of input", tok)
        raise self.error(f"unexpected token {value!r}", tok)


def parse(text: str, allowed_vars: Iterable[str] | None = None) -> Expr:
    """Parse ``text`` with the expression grammar.

    ``allowed_vars`` restricts which names may appear; ``None`` accepts any
    well-formed name.  Unary minus is accepted in addition to the binary
    operators.
    """
    allowed = None if allowed_vars is None else frozenset(allowed_vars)
    return _Parser(text, allowed).parse()


# --------------------------------------------------------------------------
# Printing


class _GrammarPrinter(StrPrinter):
    def _print_Exp1(self, expr):
        return "exp(1)"

    def _print_Pow(self, expr, rational=False):
        return super()._print_Pow(expr, rational).replace("**", "^")

    def _print_Float(self, expr):  # pragma: no cover - guarded upstream
        raise ExprError("floating-point value leaked into a symbolic result")


_PRINTER = _GrammarPrinter({"order": None})


def to_string(e: Expr) -> str:
    """Canonical printed form; ``parse(to_string(e))`` reproduces ``e``."""
    return _PRINTER.doprint(sympy.sympify(e)).replace("**", "^")


# --------------------------------------------------------------------------
# Algebra


def _check_exact(e: Expr) -> None:
    if e.has(sympy.Float):
        raise ExprError(f"floating-point constant in {e}")


def in_rational_fragment(e: Expr) -> bool:
    """True when ``e`` is a rational function of its variables."""
    if e.atoms(sympy.Function):
        return False
    for p in e.atoms(sympy.Pow):
        if not p.exp.is_Integer:
            return False
    return not e.has(sympy.E)


def normalize(e: Expr) -> Expr:
    """Rational normal form: numerator/denominator expanded, like terms collected.

    Function applications are treated as opaque generators.
    """
    e = sympy.sympify(e)
    _check_exact(e)
    if e.is_Number or e.is_Symbol:
        return e
    if _is_polynomial_expr(e):
        # polynomial: ring arithmetic expands much faster than Expr.expand
        gens = sorted(e.free_symbols, key=lambda s: s.name)
        R, *_ = ring(gens, QQ)
        return R.from_expr(e).as_expr()
    ex = sympy.expand(e)
    if not any(p.exp.is_negative for p in ex.atoms(sympy.Pow)):
        # no denominators: the expanded polynomial is already the normal form
        return ex
    return sympy.cancel(ex)


def _is_polynomial_expr(e: Expr) -> bool:
    return in_rational_fragment(e) and not any(p.exp.is_negative for p in e.atoms(sympy.Pow))


def derivation(f: Expr, comps: Mapping[str, Expr]) -> Expr:
    """``sum_q comps[q] * df/dq``, normalized."""
    f = sympy.sympify(f)
    exprs = [f, *comps.values()]
    if all(_is_polynomial_expr(sympy.sympify(e)) for e in exprs):
        gens = set().union(*(sympy.sympify(e).free_symbols for e in exprs), {sympy.Symbol(q) for q in comps})
        gens = sorted(gens, key=lambda s: s.name)
        R, *xs = ring(gens, QQ)
        index = {g.name: x for g, x in zip(gens, xs)}
        pf = R.from_expr(f) if f.free_symbols else R(f)
        total = R.zero
        for q, c in comps.items():
            c = sympy.sympify(c)
            total += (R.from_expr(c) if c.free_symbols else R(c)) * pf.diff(index[q])
        return total.as_expr()
    total = sum((c * sympy.diff(f, sympy.Symbol(q)) for q, c in comps.items()), ZERO)
    return normalize(total)


def differentiate(e: Expr, v: str | sympy.Symbol) -> Expr:
    s = v if isinstance(v, sympy.Symbol) else sympy.Symbol(v)
    return normalize(sympy.diff(e, s))


def substitute(e: Expr, bindings: Mapping) -> Expr:
    """Simultaneous substitution followed by normalization."""
    if not bindings:
        return normalize(e)
    table = {
        (k if isinstance(k, sympy.Symbol) else sympy.Symbol(k)): sympy.sympify(v)
        for k, v in bindings.items()
    }
    return normalize(sympy.sympify(e).xreplace(table))


def free_names(e: Expr) -> set[str]:
    return {s.name for s in sympy.sympify(e).free_symbols}


def _random_point(rng: random.Random, names):
    point = {}
    for name in names:
        num = rng.randint(-40, 40)
        den = rng.randint(1, 13)
        point[name] = Fraction(num, den)
    return point


def evaluate(e: Expr, point: Mapping[str, object], dps: int = 40):
    """Evaluate with mpmath at ``dps`` digits.  Raises on singular points."""
    syms = sorted(sympy.sympify(e).free_symbols, key=lambda s: s.name)
    fn = sympy.lambdify(syms, e, modules="mpmath")
    with mpmath.workdps(dps):
        args = [mpmath.mpf(Fraction(point[s.name]).numerator) / Fraction(point[s.name]).denominator for s in syms]
        return fn(*args)


def _numeric_zero_test(e: Expr, cfg: SimplifyConfig) -> Verdict:
    rng = random.Random(cfg.seed)
    syms = sorted(e.free_symbols, key=lambda s: s.name)
    fn = sympy.lambdify(syms, e, modules="mpmath")
    done = 0
    attempts = 0
    max_attempts = 20 * cfg.samples + 20
    with mpmath.workdps(40):
        while done < cfg.samples:
            attempts += 1
            if attempts > max_attempts:
                raise ZeroTestError(
                    f"could not find {cfg.samples} regular sample points for {to_string(e)}"
                )
            point = _random_point(rng, [s.name for s in syms])
            try:
                args = [mpmath.mpf(point[s.name].numerator) / point[s.name].denominator for s in syms]
                value = fn(*args)
            except (ZeroDivisionError, ValueError, OverflowError):
                continue
            value = mpmath.mpc(value)
            if not (mpmath.isfinite(value.real) and mpmath.isfinite(value.imag)):
                continue
            if abs(value.imag) > cfg.tolerance:
                # outside the real domain of sqrt/log
                continue
            if abs(value.real) > cfg.tolerance:
                return Verdict.NUMERICALLY_NONZERO
            done += 1
    return Verdict.NUMERICALLY_ZERO


def _freeze_functions(e: Expr) -> Expr:
    reps = {}
    for d in sorted(e.atoms(sympy.Derivative), key=sympy.default_sort_key):
        reps[d] = sympy.Dummy(f"jet{len(reps)}")
    e = e.xreplace(reps)
    fns = {f: sympy.Dummy(f"fn{i}") for i, f in enumerate(sorted(e.atoms(AppliedUndef), key=sympy.default_sort_key))}
    return e.xreplace(fns)


def is_zero(e: Expr, cfg: SimplifyConfig = DEFAULT_CONFIG) -> Verdict:
    """Decide whether ``e`` vanishes identically.

    Rational functions are decided exactly.  For expressions involving the
    transcendental functions, a vanishing normal form still proves zero;
    otherwise the answer comes from random rational sample points and is
    labelled ``Numerically*``.
    """
    e = sympy.sympify(e)
    _check_exact(e)
    nf = normalize(e)
    if nf == 0:
        return Verdict.PROVEN_ZERO
    if in_rational_fragment(nf):
        return Verdict.PROVEN_NONZERO
    if nf.atoms(AppliedUndef):
        # values and derivatives of generic functions are independent at a point
        return is_zero(_freeze_functions(nf), cfg)
    if not nf.free_symbols:
        value = sympy.N(nf, 50)
        if abs(value) > cfg.tolerance:
            return Verdict.PROVEN_NONZERO
        return Verdict.NUMERICALLY_ZERO
    return _numeric_zero_test(nf, cfg)


def is_constant(e: Expr) -> bool:
    return not sympy.sympify(e).free_symbols


def is_polynomial(e: Expr) -> bool:
    e = sympy.sympify(e)
    syms = sorted(e.free_symbols, key=lambda s: s.name)
    if not in_rational_fragment(e):
        return False
    return e.is_polynomial(*syms) if syms else True


def factor_constraint(e: Expr) -> list[Expr]:
    """Irreducible factors over the rationals, content dropped.

    Non-polynomial input comes back unchanged as a single-element list.
    Factors are distinct (multiplicity does not change a zero set) and are
    ordered by printed form.
    """
    e = normalize(e)
    if not is_polynomial(e) or is_constant(e):
        return [e]
    syms = sorted(e.free_symbols, key=lambda s: s.name)
    _, pairs = sympy.factor_list(sympy.expand(e), *syms)
    factors = [sympy.expand(f) for f, _ in pairs if not is_constant(f)]
    if not factors:
        return [e]
    unique = {to_string(f): f for f in factors}
    return [unique[k] for k in sorted(unique)]


def linear_solve_for(e: Expr, preferred: Iterable[str]) -> tuple[str, Expr] | None:
    """Solve ``e = 0`` for one variable in which it is linear with a constant
    nonzero coefficient.  Variables are tried in ``preferred`` order."""
    e = normalize(e)
    if not is_polynomial(e):
        return None
    names = free_names(e)
    for name in preferred:
        if name not in names:
            continue
        s = sympy.Symbol(name)
        poly = sympy.Poly(e, s)
        if poly.degree() != 1:
            continue
        coeff = poly.coeff_monomial(s)
        if not is_constant(coeff) or coeff == 0:
            continue
        rest = sympy.expand(e - coeff * s)
        return name, normalize(-rest / coeff)
    return None

"""Differential forms in the adapted cobasis of a chart.

A form is a table from strictly increasing index tuples (positions in
``chart.coords``) to coefficient expressions.  Wedge products, exterior
derivatives, contractions and pullbacks are plain multi-index bookkeeping.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import sympy

from . import symcore
from .geometry import ChartSpec, VectorField, _same_chart
from .symcore import DEFAULT_CONFIG, Expr, SimplifyConfig


def _sort_sign(idx: Sequence[int]) -> tuple[int, tuple[int, ...]] | None:
    """Sign of the sorting permutation, or None on a repeated index."""
    if len(set(idx)) != len(idx):
        return None
    sign = 1
    arr = list(idx)
    for i in range(len(arr)):
        for j in range(len(arr) - 1 - i):
            if arr[j] > arr[j + 1]:
                arr[j], arr[j + 1] = arr[j + 1], arr[j]
                sign = -sign
    return sign, tuple(arr)


@dataclass(frozen=True)
class AdaptedForm:
    chart: ChartSpec
    degree: int
    coeffs: Mapping[tuple[int, ...], Expr]

    def __post_init__(self):
        clean = {}
        for idx, c in self.coeffs.items():
            idx = tuple(idx)
            if len(idx) != self.degree or list(idx) != sorted(set(idx)):
                raise ValueError(f"bad index tuple {idx} for a {self.degree}-form")
            c = symcore.normalize(c)
            if c != 0:
                clean[idx] = c
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def zero(cls, chart: ChartSpec, degree: int) -> "AdaptedForm":
        return cls(chart, degree, {})

    @classmethod
    def function(cls, chart: ChartSpec, f) -> "AdaptedForm":
        return cls(chart, 0, {(): sympy.sympify(f)})

    @classmethod
    def d_coord(cls, chart: ChartSpec, name: str) -> "AdaptedForm":
        return cls(chart, 1, {(chart.coords.index(name),): symcore.ONE})

    def __getitem__(self, names) -> Expr:
        """Coefficient on a monomial given by coordinate names (any order)."""
        if isinstance(names, str):
            names = (names,)
        idx = [self.chart.coords.index(n) for n in names]
        res = _sort_sign(idx)
        if res is None:
            return symcore.ZERO
        sign, key = res
        return sign * self.coeffs.get(key, symcore.ZERO)

    def _check(self, other: "AdaptedForm"):
        _same_chart(self, other)
        if self.degree != other.degree:
            raise ValueError("degree mismatch")

    def __add__(self, other: "AdaptedForm") -> "AdaptedForm":
        self._check(other)
        keys = set(self.coeffs) | set(other.coeffs)
        return AdaptedForm(self.chart, self.degree, {
            k: self.coeffs.get(k, 0) + other.coeffs.get(k, 0) for k in keys
        })

    def __neg__(self) -> "AdaptedForm":
        return self.scaled(-1)

    def __sub__(self, other: "AdaptedForm") -> "AdaptedForm":
        return self + (-other)

    def scaled(self, f) -> "AdaptedForm":
        f = sympy.sympify(f)
        return AdaptedForm(self.chart, self.degree, {k: f * c for k, c in self.coeffs.items()})

    def __xor__(self, other: "AdaptedForm") -> "AdaptedForm":
        return wedge(self, other)

    def is_zero(self, cfg: SimplifyConfig = DEFAULT_CONFIG) -> bool:
        return all(symcore.is_zero(c, cfg).zero for c in self.coeffs.values())

    def map(self, fn) -> "AdaptedForm":
        return AdaptedForm(self.chart, self.degree, {k: fn(c) for k, c in self.coeffs.items()})

    def monomial_name(self, idx: tuple[int, ...]) -> str:
        if not idx:
            return "1"
        return "^".join("d" + self.chart.coords[i] for i in idx)

    def to_dict(self) -> dict[str, str]:
        return {self.monomial_name(k): symcore.to_string(c) for k, c in self.coeffs.items()}

    def __str__(self):
        if not self.coeffs:
            return "0"
        return " + ".join(f"({symcore.to_string(c)})*{self.monomial_name(k)}" for k, c in self.coeffs.items())


def wedge(a: AdaptedForm, b: AdaptedForm) -> AdaptedForm:
    _same_chart(a, b)
    out: dict[tuple[int, ...], Expr] = {}
    for ia, ca in a.coeffs.items():
        for ib, cb in b.coeffs.items():
            res = _sort_sign(ia + ib)
            if res is None:
                continue
            sign, key = res
            out[key] = out.get(key, symcore.ZERO) + sign * ca * cb
    return AdaptedForm(a.chart, a.degree + b.degree, out)


def wedge_all(forms: Sequence[AdaptedForm]) -> AdaptedForm:
    acc = forms[0]
    for f in forms[1:]:
        acc = wedge(acc, f)
    return acc


def exterior_derivative(a: AdaptedForm) -> AdaptedForm:
    coords = a.chart.coords
    out: dict[tuple[int, ...], Expr] = {}
    for idx, c in a.coeffs.items():
        for j, q in enumerate(coords):
            dc = sympy.diff(c, sympy.Symbol(q))
            if dc == 0:
                continue
            res = _sort_sign((j,) + idx)
            if res is None:
                continue
            sign, key = res
            out[key] = out.get(key, symcore.ZERO) + sign * dc
    return AdaptedForm(a.chart, a.degree + 1, out)


def interior(X: VectorField, a: AdaptedForm) -> AdaptedForm:
    """``i(X) a``, contracting X into the first slot."""
    _same_chart(X, a)
    if a.degree == 0:
        return AdaptedForm.zero(a.chart, 0)
    coords = a.chart.coords
    out: dict[tuple[int, ...], Expr] = {}
    for idx, c in a.coeffs.items():
        for r, i in enumerate(idx):
            comp = X[coords[i]]
            if comp == 0:
                continue
            key = idx[:r] + idx[r + 1:]
            out[key] = out.get(key, symcore.ZERO) + (-1) ** r * comp * c
    return AdaptedForm(a.chart, a.degree - 1, out)


def contract_multivector(factors: Sequence[VectorField], a: AdaptedForm) -> AdaptedForm:
    """``i(Y_1 ^ ... ^ Y_k) a = i(Y_k) ... i(Y_1) a``."""
    for Y in factors:
        a = interior(Y, a)
    return a


def lie_derivative(X: VectorField, a: AdaptedForm) -> AdaptedForm:
    """Cartan's formula ``L(X) = i(X) d + d i(X)``."""
    first = interior(X, exterior_derivative(a))
    if a.degree == 0:
        return first
    return first + exterior_derivative(interior(X, a))


def volume(chart: ChartSpec) -> AdaptedForm:
    """``d^m x = dx^1 ^ ... ^ dx^m``."""
    return AdaptedForm(chart, chart.m, {tuple(range(chart.m)): symcore.ONE})


def volume_minus(chart: ChartSpec, mu: int) -> AdaptedForm:
    """``d^{m-1} x_mu = i(d/dx^mu) d^m x``."""
    return interior(VectorField.coordinate(chart, chart.base[mu]), volume(chart))


def pullback(a: AdaptedForm, values: Mapping[str, Expr]) -> AdaptedForm:
    """Pull back along a section given by coordinate values as functions of
    the base coordinates.  Base coordinates missing from ``values`` map to
    themselves.  The result only involves base differentials."""
    chart = a.chart
    full = {x: sympy.Symbol(x) for x in chart.base}
    full.update({k: sympy.sympify(v) for k, v in values.items()})
    table = {sympy.Symbol(k): v for k, v in full.items()}
    dq = {}
    for q in chart.coords:
        if q not in full:
            raise ValueError(f"pullback needs a value for coordinate {q}")
        comps = {x: sympy.diff(full[q], sympy.Symbol(x)) for x in chart.base}
        dq[q] = AdaptedForm(chart, 1, {(chart.coords.index(x),): c for x, c in comps.items()})
    out = AdaptedForm.zero(chart, a.degree)
    for idx, c in a.coeffs.items():
        term = AdaptedForm.function(chart, sympy.sympify(c).xreplace(table))
        for i in idx:
            term = wedge(term, dq[chart.coords[i]])
        out = out + term
    return out


def horizontal_part(a: AdaptedForm) -> AdaptedForm:
    """Drop everything in the contact ideal.

    Rewrites each ``dy^A`` as ``theta^A + v^A_mu dx^mu`` and discards terms
    containing a ``theta`` factor, i.e. substitutes ``dy^A -> v^A_mu dx^mu``.
    """
    chart = a.chart
    if not chart.is_jet:
        raise ValueError("contact reduction needs a jet chart")
    repl = {}
    for A, y in enumerate(chart.fiber):
        repl[chart.coords.index(y)] = AdaptedForm(chart, 1, {
            (chart.coords.index(x),): chart.v(A, mu) for mu, x in enumerate(chart.base)
        })
    out = AdaptedForm.zero(chart, a.degree)
    for idx, c in a.coeffs.items():
        term = AdaptedForm.function(chart, c)
        for i in idx:
            piece = repl.get(i)
            if piece is None:
                piece = AdaptedForm(chart, 1, {(i,): symcore.ONE})
            term = wedge(term, piece)
        out = out + term
    return out


def multivector_coefficients(vectors: Sequence[VectorField]) -> dict[tuple[int, ...], Expr]:
    """Coordinate coefficients of ``V_1 ^ ... ^ V_k`` (minors of the component matrix)."""
    if not vectors:
        return {(): symcore.ONE}
    chart = vectors[0].chart
    coords = chart.coords
    M = sympy.Matrix([[V[q] for q in coords] for V in vectors])
    out = {}
    for idx in itertools.combinations(range(len(coords)), len(vectors)):
        c = symcore.normalize(M.extract(list(range(len(vectors))), list(idx)).det(method="bareiss"))
        if c != 0:
            out[idx] = c
    return out


def d_coord_wedge_volume_minus(chart: ChartSpec, name: str, mu: int) -> AdaptedForm:
    """``dq ^ d^{m-1} x_mu``."""
    return wedge(AdaptedForm.d_coord(chart, name), volume_minus(chart, mu))

"""Connections and jet fields, their multivector fields, curvature and holonomy.

Index convention for second-order coefficients: ``G[A][mu][rho]`` is the
component of the ``mu``-th horizontal field along ``d/dv^A_rho``, i.e.

    X_mu = d/dx^mu + F[A][mu] d/dy^A + G[A][mu][rho] d/dv^A_rho

and an integral section ``(f, g)`` satisfies ``dg^A_rho/dx^mu = G[A][mu][rho]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import sympy

from . import symcore
from .forms import AdaptedForm, multivector_coefficients, pullback
from .geometry import (
    ChartSpec,
    DecomposableMVF,
    GeometryError,
    VectorField,
    normalize_factors,
    transversality_check,
)
from .symcore import DEFAULT_CONFIG, Expr, SimplifyConfig


class JetError(GeometryError):
    pass


def _table(rows) -> tuple:
    if isinstance(rows, (list, tuple)):
        return tuple(_table(r) for r in rows)
    return symcore.normalize(sympy.sympify(rows))


def _require_jet(chart: ChartSpec):
    if not chart.is_jet:
        raise JetError("operation needs a jet chart (x, y, v)")


@dataclass(frozen=True)
class ConnectionE:
    """Jet field ``E -> J^1 E`` with coefficients ``Gamma[A][mu]``."""

    chart: ChartSpec
    Gamma: tuple

    def __post_init__(self):
        object.__setattr__(self, "Gamma", _table(self.Gamma))
        if len(self.Gamma) != self.chart.N or any(len(r) != self.chart.m for r in self.Gamma):
            raise JetError("Gamma must be an N x m table")
        allowed = set(self.chart.base) | set(self.chart.fiber) | set(self.chart.params)
        for row in self.Gamma:
            for e in row:
                if not symcore.free_names(e) <= allowed:
                    raise JetError("connection coefficients may only depend on (x, y)")

    def to_mvf(self) -> DecomposableMVF:
        chart = self.chart
        factors = []
        for mu, x in enumerate(chart.base):
            comps = {x: symcore.ONE}
            for A, y in enumerate(chart.fiber):
                comps[y] = self.Gamma[A][mu]
            factors.append(VectorField(chart, comps))
        return DecomposableMVF(chart, tuple(factors))


@dataclass(frozen=True)
class JetFieldJ1:
    """Jet field ``J^1 E -> J^1 J^1 E`` with ``F[A][mu]`` and ``G[A][mu][rho]``."""

    chart: ChartSpec
    F: tuple
    G: tuple

    def __post_init__(self):
        _require_jet(self.chart)
        object.__setattr__(self, "F", _table(self.F))
        object.__setattr__(self, "G", _table(self.G))
        N, m = self.chart.N, self.chart.m
        if len(self.F) != N or any(len(r) != m for r in self.F):
            raise JetError("F must be an N x m table")
        if len(self.G) != N or any(len(r) != m or any(len(s) != m for s in r) for r in self.G):
            raise JetError("G must be an N x m x m table")

    @classmethod
    def sopde(cls, chart: ChartSpec, G) -> "JetFieldJ1":
        F = [[chart.v(A, mu) for mu in range(chart.m)] for A in range(chart.N)]
        return cls(chart, F, G)

    def horizontal(self, mu: int) -> VectorField:
        chart = self.chart
        comps = {chart.base[mu]: symcore.ONE}
        for A, y in enumerate(chart.fiber):
            comps[y] = self.F[A][mu]
            for rho in range(chart.m):
                comps[chart.jet[A][rho]] = self.G[A][mu][rho]
        return VectorField(chart, comps)

    def to_dict(self) -> dict:
        return {
            "F": [[symcore.to_string(e) for e in r] for r in self.F],
            "G": [[[symcore.to_string(e) for e in s] for s in r] for r in self.G],
        }


@dataclass(frozen=True)
class Section:
    """Section ``phi = (x, f^A(x))``."""

    chart: ChartSpec
    f: tuple

    def __post_init__(self):
        object.__setattr__(self, "f", _table(tuple(self.f)))
        if len(self.f) != self.chart.N:
            raise JetError("a section needs one component per fiber coordinate")
        _base_only(self.chart, self.f)

    def values(self) -> dict[str, Expr]:
        return dict(zip(self.chart.fiber, self.f))


@dataclass(frozen=True)
class JetSection:
    """Section ``psi = (x, f^A(x), g^A_mu(x))`` of ``J^1 E -> M``."""

    chart: ChartSpec
    f: tuple
    g: tuple

    def __post_init__(self):
        object.__setattr__(self, "f", _table(tuple(self.f)))
        object.__setattr__(self, "g", _table(tuple(self.g)))
        if len(self.f) != self.chart.N or len(self.g) != self.chart.N:
            raise JetError("jet section shape mismatch")
        _base_only(self.chart, self.f)
        for row in self.g:
            _base_only(self.chart, row)

    def values(self) -> dict[str, Expr]:
        out = dict(zip(self.chart.fiber, self.f))
        if self.chart.is_jet:
            for A in range(self.chart.N):
                for mu in range(self.chart.m):
                    out[self.chart.jet[A][mu]] = self.g[A][mu]
        return out


def _base_only(chart: ChartSpec, exprs):
    allowed = set(chart.base) | set(chart.params)
    for e in exprs:
        if not symcore.free_names(e) <= allowed:
            raise JetError(f"section component {symcore.to_string(e)} depends on non-base coordinates")


# --------------------------------------------------------------------------
# Curvature


def curvature_E(c: ConnectionE) -> sympy.Array:
    """``R[B, mu, eta] = dG^B_eta/dx^mu - dG^B_mu/dx^eta + G^A_mu dG^B_eta/dy^A - G^A_eta dG^B_mu/dy^A``."""
    chart = c.chart
    m, N = chart.m, chart.N
    X = [sympy.Symbol(x) for x in chart.base]
    Y = [sympy.Symbol(y) for y in chart.fiber]
    G = c.Gamma
    R = sympy.MutableDenseNDimArray.zeros(N, m, m)
    for B in range(N):
        for mu in range(m):
            for eta in range(m):
                val = sympy.diff(G[B][eta], X[mu]) - sympy.diff(G[B][mu], X[eta])
                for A in range(N):
                    val += G[A][mu] * sympy.diff(G[B][eta], Y[A]) - G[A][eta] * sympy.diff(G[B][mu], Y[A])
                R[B, mu, eta] = symcore.normalize(val)
    return sympy.ImmutableDenseNDimArray(R)


def _total(j: JetFieldJ1, mu: int, h: Expr) -> Expr:
    """Derivative of ``h`` along the horizontal field ``X_mu`` written out in coordinates."""
    chart = j.chart
    val = sympy.diff(h, sympy.Symbol(chart.base[mu]))
    for A, y in enumerate(chart.fiber):
        val += j.F[A][mu] * sympy.diff(h, sympy.Symbol(y))
        for gamma in range(chart.m):
            val += j.G[A][mu][gamma] * sympy.diff(h, chart.v(A, gamma))
    return val


@dataclass
class CurvatureJ1:
    y_block: sympy.Array  # [B, mu, eta]
    v_block: sympy.Array  # [B, rho, mu, eta]

    def entries(self):
        yield from ((("y",) + k, v) for k, v in _items(self.y_block))
        yield from ((("v",) + k, v) for k, v in _items(self.v_block))

    def is_zero(self, cfg: SimplifyConfig = DEFAULT_CONFIG) -> bool:
        return all(symcore.is_zero(v, cfg).zero for _, v in self.entries())

    def to_dict(self) -> dict:
        return {
            "y_block": _nested(self.y_block),
            "v_block": _nested(self.v_block),
        }


def _items(arr: sympy.Array):
    for idx in itertools.product(*(range(s) for s in arr.shape)):
        yield idx, arr[idx]


def _nested(arr: sympy.Array):
    return [symcore.to_string(e) for e in arr] if arr.rank() == 1 else [
        _nested(arr[i]) for i in range(arr.shape[0])
    ]


def curvature_J1(j: JetFieldJ1) -> CurvatureJ1:
    """Both coefficient blocks of the curvature of a jet field on ``J^1 E``.

    y-block ``[B, mu, eta]``: ``X_mu(F^B_eta) - X_eta(F^B_mu)``;
    v-block ``[B, rho, mu, eta]``: ``X_mu(G^B_{eta rho}) - X_eta(G^B_{mu rho})``.
    """
    chart = j.chart
    m, N = chart.m, chart.N
    yb = sympy.MutableDenseNDimArray.zeros(N, m, m)
    vb = sympy.MutableDenseNDimArray.zeros(N, m, m, m)
    for B in range(N):
        for mu in range(m):
            for eta in range(m):
                yb[B, mu, eta] = symcore.normalize(_total(j, mu, j.F[B][eta]) - _total(j, eta, j.F[B][mu]))
                for rho in range(m):
                    vb[B, rho, mu, eta] = symcore.normalize(
                        _total(j, mu, j.G[B][eta][rho]) - _total(j, eta, j.G[B][mu][rho])
                    )
    return CurvatureJ1(sympy.ImmutableDenseNDimArray(yb), sympy.ImmutableDenseNDimArray(vb))


# --------------------------------------------------------------------------
# Jet field <-> multivector field


def jetfield_to_mvf(j: JetFieldJ1) -> DecomposableMVF:
    return DecomposableMVF(j.chart, tuple(j.horizontal(mu) for mu in range(j.chart.m)))


def mvf_to_jetfield(Y: DecomposableMVF, cfg: SimplifyConfig = DEFAULT_CONFIG) -> JetFieldJ1:
    """Normalize the factors to the identity base block and read off (F, G)."""
    _require_jet(Y.chart)
    if not transversality_check(Y, cfg):
        raise JetError("multivector field is not transverse to the base")
    Yn = Y if Y.is_normalized() else normalize_factors(Y, cfg)
    chart = Y.chart
    F = [[Yn.factors[mu][y] for mu in range(chart.m)] for y in chart.fiber]
    G = [
        [[Yn.factors[mu][chart.jet[A][rho]] for rho in range(chart.m)] for mu in range(chart.m)]
        for A in range(chart.N)
    ]
    return JetFieldJ1(chart, F, G)


# --------------------------------------------------------------------------
# Contact structure and SOPDE


def contact_forms(chart: ChartSpec) -> list[AdaptedForm]:
    """Generators ``theta^A = dy^A - v^A_mu dx^mu`` of the contact module."""
    _require_jet(chart)
    out = []
    for A, y in enumerate(chart.fiber):
        coeffs = {(chart.coords.index(y),): symcore.ONE}
        for mu, x in enumerate(chart.base):
            coeffs[(chart.coords.index(x),)] = -chart.v(A, mu)
        out.append(AdaptedForm(chart, 1, coeffs))
    return out


@dataclass
class SopdeReport:
    via_F: bool
    via_theta: bool
    witnesses: list[str]
    numeric: bool = False

    @property
    def agree(self) -> bool:
        return self.via_F == self.via_theta

    def to_dict(self) -> dict:
        return {
            "via_F": self.via_F,
            "via_theta": self.via_theta,
            "agree": self.agree,
            "witnesses": self.witnesses,
            "confidence": "numeric" if self.numeric else "proven",
        }


def theta_contraction(Y: DecomposableMVF) -> list[dict[tuple[int, ...], Expr]]:
    """``i(theta^A) Y`` for each A as coordinate coefficients of an (m-1)-vector.

    ``i(theta)(Y_1 ^ ... ^ Y_m) = sum_mu (-1)^(mu) theta(Y_mu) Y_1 ^ ..^Y_mu^.. ^ Y_m``,
    multiplied by the scale of ``Y``.
    """
    chart = Y.chart
    out = []
    for theta in contact_forms(chart):
        total: dict[tuple[int, ...], Expr] = {}
        for mu, Ymu in enumerate(Y.factors):
            val = sum((Ymu[chart.coords[i[0]]] * c for i, c in theta.coeffs.items()), symcore.ZERO)
            if symcore.normalize(val) == 0:
                continue
            rest = [f for k, f in enumerate(Y.factors) if k != mu]
            for idx, c in multivector_coefficients(rest).items():
                total[idx] = total.get(idx, symcore.ZERO) + (-1) ** mu * val * c
        out.append({k: symcore.normalize(Y.scale * v) for k, v in total.items() if symcore.normalize(v) != 0})
    return out


def sopde_check(Y: DecomposableMVF, cfg: SimplifyConfig = DEFAULT_CONFIG) -> SopdeReport:
    """Test the SOPDE condition twice: from the normalized coefficients
    (``F = v``) and from the contraction ``i(theta) Y = 0``."""
    chart = Y.chart
    _require_jet(chart)
    numeric = False
    j = mvf_to_jetfield(Y, cfg)
    witnesses = []
    via_F = True
    for A in range(chart.N):
        for mu in range(chart.m):
            diff = symcore.normalize(j.F[A][mu] - chart.v(A, mu))
            verdict = symcore.is_zero(diff, cfg)
            numeric |= verdict.numeric
            if not verdict.zero:
                via_F = False
                witnesses.append(symcore.to_string(diff))
    via_theta = True
    for coeffs in theta_contraction(Y):
        for value in coeffs.values():
            verdict = symcore.is_zero(value, cfg)
            numeric |= verdict.numeric
            if not verdict.zero:
                via_theta = False
    return SopdeReport(via_F, via_theta, witnesses, numeric)


# --------------------------------------------------------------------------
# Sections


def prolong_section(phi: Section) -> JetSection:
    chart = phi.chart
    g = [[symcore.differentiate(f, x) for x in chart.base] for f in phi.f]
    return JetSection(chart, phi.f, g)


@dataclass
class HolonomyReport:
    holonomic: bool
    via_derivatives: bool
    via_contact: bool
    residuals: list[str]

    def __bool__(self):
        return self.holonomic


def holonomy_check(psi: JetSection, cfg: SimplifyConfig = DEFAULT_CONFIG) -> HolonomyReport:
    """``g^A_mu = df^A/dx^mu``, checked directly and as ``psi^* theta^A = 0``."""
    chart = psi.chart
    residuals = []
    via_derivatives = True
    for A in range(chart.N):
        for mu, x in enumerate(chart.base):
            r = symcore.normalize(psi.g[A][mu] - sympy.diff(psi.f[A], sympy.Symbol(x)))
            if not symcore.is_zero(r, cfg).zero:
                via_derivatives = False
                residuals.append(symcore.to_string(r))
    jet_chart = chart if chart.is_jet else ChartSpec.make(chart.base, chart.fiber, jet=True, params=chart.params)
    psi_j = JetSection(jet_chart, psi.f, psi.g)
    via_contact = all(pullback(theta, psi_j.values()).is_zero(cfg) for theta in contact_forms(jet_chart))
    if via_derivatives != via_contact:
        raise AssertionError("holonomy tests disagree")
    return HolonomyReport(via_derivatives, via_derivatives, via_contact, residuals)


@dataclass
class SectionResidual:
    first: list[list[Expr]]  # [A][mu]: df^A/dx^mu - F^A_mu o psi
    second: list[list[list[Expr]]]  # [A][mu][rho]: dg^A_rho/dx^mu - G^A_{mu rho} o psi

    def is_zero(self, cfg: SimplifyConfig = DEFAULT_CONFIG) -> bool:
        vals = [e for r in self.first for e in r] + [e for r in self.second for s in r for e in s]
        return all(symcore.is_zero(e, cfg).zero for e in vals)

    def to_dict(self) -> dict:
        return {
            "first": [[symcore.to_string(e) for e in r] for r in self.first],
            "second": [[[symcore.to_string(e) for e in s] for s in r] for r in self.second],
        }


def integral_section_residual(field, section, cfg: SimplifyConfig = DEFAULT_CONFIG) -> SectionResidual:
    """Residuals of the integral-section PDE system.

    ``field`` is a :class:`JetFieldJ1` (``section`` a :class:`JetSection`) or a
    :class:`ConnectionE` (``section`` a :class:`Section`, second group empty).
    """
    chart = field.chart
    X = [sympy.Symbol(x) for x in chart.base]
    if isinstance(field, ConnectionE):
        values = section.values()
        first = [
            [symcore.normalize(sympy.diff(section.f[A], X[mu]) - symcore.substitute(field.Gamma[A][mu], values))
             for mu in range(chart.m)]
            for A in range(chart.N)
        ]
        return SectionResidual(first, [])
    if isinstance(section, Section):
        section = JetSection(section.chart, section.f, [[symcore.ZERO] * chart.m for _ in range(chart.N)])
    psi = JetSection(chart, section.f, section.g)
    values = psi.values()
    first = [
        [symcore.normalize(sympy.diff(psi.f[A], X[mu]) - symcore.substitute(field.F[A][mu], values))
         for mu in range(chart.m)]
        for A in range(chart.N)
    ]
    second = [
        [[symcore.normalize(sympy.diff(psi.g[A][rho], X[mu]) - symcore.substitute(field.G[A][mu][rho], values))
          for rho in range(chart.m)]
         for mu in range(chart.m)]
        for A in range(chart.N)
    ]
    return SectionResidual(first, second)


def second_order_residual(j: JetFieldJ1, phi: Section) -> list[list[list[Expr]]]:
    """``G^A_{mu rho}(x, f, df) - d^2 f^A/dx^mu dx^rho`` for a SOPDE jet field."""
    psi = prolong_section(phi)
    chart = j.chart
    psi = JetSection(chart, psi.f, psi.g)
    values = psi.values()
    X = [sympy.Symbol(x) for x in chart.base]
    return [
        [[symcore.normalize(symcore.substitute(j.G[A][mu][rho], values) - sympy.diff(phi.f[A], X[mu], X[rho]))
          for rho in range(chart.m)]
         for mu in range(chart.m)]
        for A in range(chart.N)
    ]


# --------------------------------------------------------------------------
# Integrability of SOPDE jet fields


@dataclass
class SopdeConditions:
    symmetry: dict[tuple[int, int, int], Expr]  # (B, mu, eta), mu < eta: G^B_{eta mu} - G^B_{mu eta}
    pde: dict[tuple[int, int, int, int], Expr]  # (B, rho, mu, eta), mu < eta

    def all(self):
        return list(self.symmetry.values()) + list(self.pde.values())

    def is_zero(self, cfg: SimplifyConfig = DEFAULT_CONFIG) -> bool:
        return all(symcore.is_zero(e, cfg).zero for e in self.all())

    def to_dict(self) -> dict:
        return {
            "symmetry": {",".join(map(str, k)): symcore.to_string(v) for k, v in self.symmetry.items()},
            "pde": {",".join(map(str, k)): symcore.to_string(v) for k, v in self.pde.items()},
        }


def sopde_integrability_conditions(j: JetFieldJ1, cfg: SimplifyConfig = DEFAULT_CONFIG) -> SopdeConditions:
    """Linear symmetry relations and PDE conditions for a SOPDE jet field to be integrable."""
    chart = j.chart
    for A in range(chart.N):
        for mu in range(chart.m):
            if not symcore.is_zero(j.F[A][mu] - chart.v(A, mu), cfg).zero:
                raise JetError("integrability conditions in this form need a SOPDE jet field (F = v)")
    m = chart.m
    sym, pde = {}, {}
    for B in range(chart.N):
        for mu, eta in itertools.combinations(range(m), 2):
            sym[(B, mu, eta)] = symcore.normalize(j.G[B][eta][mu] - j.G[B][mu][eta])
            for rho in range(m):
                pde[(B, rho, mu, eta)] = symcore.normalize(
                    _total(j, mu, j.G[B][eta][rho]) - _total(j, eta, j.G[B][mu][rho])
                )
    return SopdeConditions(sym, pde)

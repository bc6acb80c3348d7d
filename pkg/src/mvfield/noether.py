"""Symmetries of Lagrangians and their conserved currents.

The engine verifies supplied candidates ``(X, xi)``; it never searches for
``xi``.
"""

from __future__ import annotations

from dataclasses import dataclass

import sympy

from . import symcore
from .forms import (
    AdaptedForm,
    exterior_derivative,
    horizontal_part,
    interior,
    lie_derivative,
    pullback,
    volume,
)
from .geometry import ChartSpec, GeometryError, VectorField
from .jet import Section, contact_forms
from .lagrangian import Lagrangian, theta_form
from .symcore import DEFAULT_CONFIG, Expr, SimplifyConfig


class NoetherError(GeometryError):
    pass


@dataclass(frozen=True)
class SymmetryCandidate:
    X: VectorField
    xi: AdaptedForm | None = None

    def __post_init__(self):
        chart = self.X.chart
        if not chart.is_jet:
            raise NoetherError("symmetry candidates live on the jet chart")
        xi = self.xi if self.xi is not None else AdaptedForm.zero(chart, chart.m - 1)
        if xi.degree != chart.m - 1:
            raise NoetherError(f"xi must have degree {chart.m - 1}")
        object.__setattr__(self, "xi", xi)

    @property
    def chart(self) -> ChartSpec:
        return self.X.chart


@dataclass
class ContactReport:
    preserved: bool
    residuals: list[AdaptedForm]

    def to_dict(self) -> dict:
        return {"preserved": self.preserved, "residuals": [r.to_dict() for r in self.residuals]}


def preserves_contact_module(X: VectorField, cfg: SimplifyConfig = DEFAULT_CONFIG) -> ContactReport:
    """Check that ``L(X) theta^A`` is a combination of the contact forms.

    The only candidate combination uses the ``dy^B`` coefficients of
    ``L(X) theta^A``; whatever is left must vanish.
    """
    chart = X.chart
    thetas = contact_forms(chart)
    residuals = []
    for th in thetas:
        lx = lie_derivative(X, th)
        rest = lx
        for B, y in enumerate(chart.fiber):
            rest = rest - thetas[B].scaled(lx[y])
        residuals.append(rest)
    return ContactReport(all(r.is_zero(cfg) for r in residuals), residuals)


def lagrangian_form(L: Lagrangian) -> AdaptedForm:
    return volume(L.chart).scaled(L.density)


def symmetry_defect(L: Lagrangian, cand: SymmetryCandidate) -> AdaptedForm:
    """``L(X)(L d^m x) - d xi`` modulo the contact module; zero for a symmetry."""
    if cand.chart.coords != L.chart.coords:
        raise NoetherError("candidate and Lagrangian use different charts")
    raw = lie_derivative(cand.X, lagrangian_form(L)) - exterior_derivative(cand.xi)
    return horizontal_part(raw)


@dataclass
class ConservedCurrent:
    current: AdaptedForm
    candidate: SymmetryCandidate
    lagrangian: Lagrangian

    def to_dict(self) -> dict:
        return {"current": self.current.to_dict()}


def conserved_current(
    L: Lagrangian, cand: SymmetryCandidate, force: bool = False, cfg: SimplifyConfig = DEFAULT_CONFIG
) -> ConservedCurrent:
    """``xi - i(X) Theta_L``.

    Refuses candidates with a nonzero symmetry defect unless ``force`` is set.
    """
    if not force and not symmetry_defect(L, cand).is_zero(cfg):
        raise NoetherError("candidate is not a symmetry (nonzero defect); pass force=True to build the form anyway")
    return ConservedCurrent(cand.xi - interior(cand.X, theta_form(L)), cand, L)


def current_closed_on_section(L: Lagrangian, cand: SymmetryCandidate, phi: Section) -> Expr:
    """Coefficient of ``d^m x`` in ``d((j^1 phi)^* current)``."""
    chart = L.chart
    X = [sympy.Symbol(x) for x in chart.base]
    values = {}
    for A, y in enumerate(chart.fiber):
        values[y] = phi.f[A]
        for mu in range(chart.m):
            values[chart.jet[A][mu]] = sympy.diff(phi.f[A], X[mu])
    cur = conserved_current(L, cand, force=True).current
    d = exterior_derivative(pullback(cur, values))
    return symcore.normalize(d[tuple(chart.base)])


def prolong_vector_field(Z: VectorField, jet_chart: ChartSpec) -> VectorField:
    """Canonical lift ``j^1 Z`` of a vector field on E to the jet chart.

    With ``Z = a^mu d/dx^mu + b^A d/dy^A`` the lift adds
    ``(D_mu b^A - v^A_nu D_mu a^nu) d/dv^A_mu`` where
    ``D_mu = d/dx^mu + v^B_mu d/dy^B``.  This is the unique choice of
    ``d/dv`` components for which the lift preserves the contact module.
    """
    if not jet_chart.is_jet:
        raise NoetherError("prolongation needs a jet chart")
    src = Z.chart
    if tuple(src.base) != tuple(jet_chart.base) or tuple(src.fiber) != tuple(jet_chart.fiber):
        raise NoetherError("vector field and jet chart do not share base and fiber")
    for name in jet_chart.jet_names:
        if Z[name] != 0:
            raise NoetherError("Z must be a vector field on E (no d/dv components)")
    a = [Z[x] for x in src.base]
    b = [Z[y] for y in src.fiber]

    def D(mu, h):
        out = sympy.diff(h, sympy.Symbol(jet_chart.base[mu]))
        for B, y in enumerate(jet_chart.fiber):
            out += jet_chart.v(B, mu) * sympy.diff(h, sympy.Symbol(y))
        return out

    comps = {q: Z[q] for q in list(src.base) + list(src.fiber)}
    for A in range(jet_chart.N):
        for mu in range(jet_chart.m):
            val = D(mu, b[A])
            for nu in range(jet_chart.m):
                val -= jet_chart.v(A, nu) * D(mu, a[nu])
            comps[jet_chart.jet[A][mu]] = val
    return VectorField(jet_chart, comps)

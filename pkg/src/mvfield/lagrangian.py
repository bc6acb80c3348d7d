"""Poincare-Cartan forms, regularity, Euler-Lagrange systems for the second-order
coefficients of Euler-Lagrange multivector fields, and the singular-case
constraint algorithm.

Unknown ``G^B_{mu nu}`` follows the convention of :mod:`mvfield.jet`: it is
the ``d/dv^B_nu`` component of the ``mu``-th factor

    X_mu = d/dx^mu + v^A_mu d/dy^A + G^A_{mu nu} d/dv^A_nu.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import sympy

from . import symcore
from .forms import AdaptedForm, d_coord_wedge_volume_minus, exterior_derivative, volume
from .geometry import ChartSpec, Reducer, _labels
from .jet import JetFieldJ1, Section, prolong_section, sopde_integrability_conditions
from .symcore import DEFAULT_CONFIG, Expr, SimplifyConfig, Verdict


class LagrangianError(ValueError):
    pass


class Cancelled(RuntimeError):
    pass


@dataclass(frozen=True)
class Lagrangian:
    chart: ChartSpec
    density: Expr

    def __post_init__(self):
        if not self.chart.is_jet:
            raise LagrangianError("a Lagrangian lives on a jet chart")
        object.__setattr__(self, "density", symcore.normalize(sympy.sympify(self.density)))
        extra = symcore.free_names(self.density) - self.chart.allowed
        if extra:
            raise LagrangianError(f"Lagrangian depends on undeclared names {sorted(extra)}")

    def dv(self, A: int, mu: int) -> Expr:
        return sympy.diff(self.density, self.chart.v(A, mu))

    def dy(self, A: int) -> Expr:
        return sympy.diff(self.density, sympy.Symbol(self.chart.fiber[A]))


# --------------------------------------------------------------------------
# Poincare-Cartan forms


@dataclass
class PCForms:
    theta_L: AdaptedForm
    omega_L: AdaptedForm
    minus_d_theta: AdaptedForm
    consistent: bool

    def to_dict(self) -> dict:
        return {
            "theta_L": self.theta_L.to_dict(),
            "omega_L": self.omega_L.to_dict(),
            "omega_equals_minus_d_theta": self.consistent,
        }


def theta_form(L: Lagrangian) -> AdaptedForm:
    """``dL/dv^A_mu dy^A ^ d^{m-1}x_mu - (dL/dv^A_mu v^A_mu - L) d^m x``."""
    chart = L.chart
    out = AdaptedForm.zero(chart, chart.m)
    energy = -L.density
    for A, y in enumerate(chart.fiber):
        for mu in range(chart.m):
            p = L.dv(A, mu)
            out = out + d_coord_wedge_volume_minus(chart, y, mu).scaled(p)
            energy += p * chart.v(A, mu)
    return out - volume(chart).scaled(energy)


def omega_table(L: Lagrangian) -> AdaptedForm:
    """The (m+1)-form written term by term in the adapted cobasis."""
    chart = L.chart
    m, N = chart.m, chart.N
    X = [sympy.Symbol(x) for x in chart.base]
    Y = [sympy.Symbol(y) for y in chart.fiber]
    vol = volume(chart)
    out = AdaptedForm.zero(chart, m + 1)
    for A, B in itertools.product(range(N), repeat=2):
        for mu in range(m):
            pA = L.dv(A, mu)
            dyA_vol = d_coord_wedge_volume_minus(chart, chart.fiber[A], mu)
            for nu in range(m):
                h = sympy.diff(pA, chart.v(B, nu))
                if h != 0:
                    dvB = AdaptedForm.d_coord(chart, chart.jet[B][nu])
                    out = out - (dvB ^ dyA_vol).scaled(h)
                    out = out + (dvB ^ vol).scaled(h * chart.v(A, mu))
            hy = sympy.diff(pA, Y[B])
            if hy != 0:
                dyB = AdaptedForm.d_coord(chart, chart.fiber[B])
                out = out - (dyB ^ dyA_vol).scaled(hy)
    for B in range(N):
        coeff = -L.dy(B)
        for mu in range(m):
            coeff += sympy.diff(L.dv(B, mu), X[mu])
            for A in range(N):
                coeff += sympy.diff(L.dv(A, mu), Y[B]) * chart.v(A, mu)
        out = out + (AdaptedForm.d_coord(chart, chart.fiber[B]) ^ vol).scaled(coeff)
    return out


def poincare_cartan(L: Lagrangian, cfg: SimplifyConfig = DEFAULT_CONFIG) -> PCForms:
    theta = theta_form(L)
    omega = omega_table(L)
    mdt = -exterior_derivative(theta)
    consistent = (omega - mdt).is_zero(cfg)
    return PCForms(theta, omega, mdt, consistent)


# --------------------------------------------------------------------------
# Regularity


class Regularity(str, enum.Enum):
    REGULAR = "regular"
    SINGULAR = "singular"
    POINTWISE = "pointwise"


@dataclass
class RegularityReport:
    hessian: sympy.Matrix
    det: Expr
    verdict: Regularity
    numeric: bool

    def to_dict(self) -> dict:
        return {
            "hessian": [[symcore.to_string(e) for e in self.hessian.row(i)] for i in range(self.hessian.rows)],
            "det": symcore.to_string(self.det),
            "verdict": self.verdict.value,
            "confidence": "numeric" if self.numeric else "proven",
        }


def hessian(L: Lagrangian) -> sympy.Matrix:
    """Rows/columns indexed by ``A*m + mu``."""
    chart = L.chart
    m, N = chart.m, chart.N
    H = sympy.zeros(N * m, N * m)
    for A, mu, B, nu in itertools.product(range(N), range(m), range(N), range(m)):
        H[A * m + mu, B * m + nu] = symcore.normalize(sympy.diff(L.density, chart.v(A, mu), chart.v(B, nu)))
    return H


def regularity(L: Lagrangian, cfg: SimplifyConfig = DEFAULT_CONFIG) -> RegularityReport:
    """Regular iff the Hessian determinant does not vanish.

    A determinant that is not identically zero but vanishes somewhere (it is
    not a nonzero constant) is reported as ``pointwise``.
    """
    H = hessian(L)
    det = symcore.normalize(H.det(method="bareiss"))
    verdict = symcore.is_zero(det, cfg)
    if verdict.zero:
        kind = Regularity.SINGULAR
    elif symcore.is_constant(det) or _never_vanishes(det):
        kind = Regularity.REGULAR
    else:
        kind = Regularity.POINTWISE
    return RegularityReport(H, det, kind, verdict.numeric)


def _never_vanishes(e: Expr) -> bool:
    """Cheap sufficient test: exp(...) times nonzero constant, or positive sums of squares plus a positive constant."""
    e = sympy.sympify(e)
    if e.func == sympy.exp:
        return True
    if e.is_Mul and all(symcore.is_constant(a) or a.func == sympy.exp for a in e.args):
        return True
    if e.is_Add:
        consts = [a for a in e.args if symcore.is_constant(a)]
        rest = [a for a in e.args if not symcore.is_constant(a)]
        if consts and sum(consts) > 0:
            return all(_even_nonneg(a) for a in rest)
    return False


def _even_nonneg(a: Expr) -> bool:
    coeff, rest = a.as_coeff_Mul()
    if coeff < 0:
        return False
    factors = sympy.Mul.make_args(rest)
    return all(f.is_Pow and f.exp.is_Integer and f.exp % 2 == 0 for f in factors)


# --------------------------------------------------------------------------
# Euler-Lagrange system for G


def g_name(chart: ChartSpec, B: int, mu: int, nu: int) -> str:
    fl, bl = _labels(chart.fiber), _labels(chart.base)
    sep = "_" if any(len(l) > 1 for l in bl) else ""
    return f"G{fl[B]}_{bl[mu]}{sep}{bl[nu]}"


def f_name(chart: ChartSpec, B: int, mu: int) -> str:
    fl, bl = _labels(chart.fiber), _labels(chart.base)
    return f"F{fl[B]}_{bl[mu]}"


def g_unknowns(chart: ChartSpec) -> list[str]:
    m, N = chart.m, chart.N
    return [g_name(chart, B, mu, nu) for B in range(N) for mu in range(m) for nu in range(m)]


@dataclass
class ELSystem:
    """``matrix * G = rhs`` with one row per fiber index ``A``.

    Column order is ``(B, mu, nu)`` lexicographic, matching ``unknowns``.
    """

    chart: ChartSpec
    unknowns: list[str]
    matrix: sympy.Matrix
    rhs: list[Expr]

    def residual(self, values: Mapping[str, Expr]) -> list[Expr]:
        table = {sympy.Symbol(k): sympy.sympify(v) for k, v in values.items()}
        out = []
        for A in range(self.matrix.rows):
            lhs = sum((self.matrix[A, j] * table.get(sympy.Symbol(u), sympy.Symbol(u))
                       for j, u in enumerate(self.unknowns)), symcore.ZERO)
            out.append(symcore.normalize(lhs - self.rhs[A]))
        return out

    def equations(self) -> list[Expr]:
        """``matrix * G - rhs`` as expressions in the unknown symbols."""
        return self.residual({})

    def to_dict(self) -> dict:
        return {
            "unknowns": list(self.unknowns),
            "equations": [symcore.to_string(e) + " = 0" for e in self.equations()],
        }


def el_system(L: Lagrangian) -> ELSystem:
    """Impose ``F = v`` and return the linear system for the ``G`` coefficients.

    Row ``A``: ``sum H[(A,mu),(B,nu)] G^B_{mu nu} = dL/dy^A - d^2L/dx^mu dv^A_mu
    - d^2L/dy^B dv^A_mu v^B_mu``.
    """
    chart = L.chart
    m, N = chart.m, chart.N
    H = hessian(L)
    unknowns = g_unknowns(chart)
    M = sympy.zeros(N, N * m * m)
    rhs = []
    X = [sympy.Symbol(x) for x in chart.base]
    Y = [sympy.Symbol(y) for y in chart.fiber]
    for A in range(N):
        for B, mu, nu in itertools.product(range(N), range(m), range(m)):
            M[A, B * m * m + mu * m + nu] = H[A * m + mu, B * m + nu]
        r = L.dy(A)
        for mu in range(m):
            r -= sympy.diff(L.dv(A, mu), X[mu])
            for B in range(N):
                r -= sympy.diff(L.dv(A, mu), Y[B]) * chart.v(B, mu)
        rhs.append(symcore.normalize(r))
    return ELSystem(chart.with_params(unknowns), unknowns, M, rhs)


def sopde_forcing_residuals(L: Lagrangian, F) -> list[list[Expr]]:
    """``[A][nu]``: ``sum_{B,mu} (F^B_mu - v^B_mu) d^2L/dv^A_nu dv^B_mu``.

    These are the conditions from the ``dv`` components of ``i(X) Omega_L = 0``;
    for a regular Lagrangian they vanish only when ``F = v``.
    """
    chart = L.chart
    m, N = chart.m, chart.N
    H = hessian(L)
    out = []
    for A in range(N):
        row = []
        for nu in range(m):
            val = sum(((sympy.sympify(F[B][mu]) - chart.v(B, mu)) * H[A * m + nu, B * m + mu]
                       for B in range(N) for mu in range(m)), symcore.ZERO)
            row.append(symcore.normalize(val))
        out.append(row)
    return out


# --------------------------------------------------------------------------
# Fraction-free elimination


@dataclass
class Elimination:
    pivots: list[tuple[int, str]]  # (row, unknown)
    rows: list[tuple[dict[str, Expr], Expr]]
    inconsistent: list[Expr]
    numeric: bool

    @property
    def rank(self) -> int:
        return len(self.pivots)


def eliminate(
    rows: Sequence[tuple[Mapping[str, Expr], Expr]],
    unknowns: Sequence[str],
    cfg: SimplifyConfig = DEFAULT_CONFIG,
    order: Sequence[str] | None = None,
    progress: Callable[[str], object] | None = None,
) -> Elimination:
    """Fraction-free Gaussian elimination of ``sum coeff[u] * u = rhs`` rows.

    Columns are visited in ``order`` (default: ``unknowns``).  Rows left with
    no nonzero coefficient but a nonzero right-hand side are returned as
    ``inconsistent`` compatibility conditions.
    """
    work = [({u: symcore.normalize(c.get(u, 0)) for u in unknowns}, symcore.normalize(b)) for c, b in rows]
    numeric = False
    pivots: list[tuple[int, str]] = []
    used = set()
    for col in (order or unknowns):
        if progress is not None and progress(f"column {col}") is False:
            raise Cancelled("elimination cancelled")
        prow = None
        for i, (coeffs, _) in enumerate(work):
            if i in used or coeffs[col] == 0:
                continue
            verdict = symcore.is_zero(coeffs[col], cfg)
            numeric |= verdict.numeric
            if verdict.zero:
                coeffs[col] = symcore.ZERO
                continue
            # prefer constant pivots: they never vanish pointwise
            if prow is None or (symcore.is_constant(coeffs[col]) and not symcore.is_constant(work[prow][0][col])):
                prow = i
        if prow is None:
            continue
        used.add(prow)
        pivots.append((prow, col))
        pc, pb = work[prow]
        piv = pc[col]
        for i, (coeffs, b) in enumerate(work):
            if i == prow or coeffs[col] == 0:
                continue
            a = coeffs[col]
            if symcore.is_constant(piv):
                new = {u: symcore.normalize(coeffs[u] - a / piv * pc[u]) for u in unknowns}
                newb = symcore.normalize(b - a / piv * pb)
            else:
                new = {u: symcore.normalize(piv * coeffs[u] - a * pc[u]) for u in unknowns}
                newb = symcore.normalize(piv * b - a * pb)
            work[i] = (new, newb)
    inconsistent = []
    for i, (coeffs, b) in enumerate(work):
        if i in used:
            continue
        if all(c == 0 or symcore.is_zero(c, cfg).zero for c in coeffs.values()):
            verdict = symcore.is_zero(b, cfg)
            numeric |= verdict.numeric
            if not verdict.zero:
                inconsistent.append(b)
    return Elimination(pivots, work, inconsistent, numeric)


# --------------------------------------------------------------------------
# Regular case


@dataclass
class ELSolutionFamily:
    chart: ChartSpec
    unknowns: list[str]
    particular: dict[str, Expr]  # pivot unknown -> expression in free unknowns
    free: list[str]
    pivot_policy: str
    homogeneous: list[Expr]

    @property
    def free_count(self) -> int:
        return len(self.free)

    def full(self, assignment: Mapping[str, Expr] | None = None) -> dict[str, Expr]:
        """Every unknown as an expression; free unknowns replaced by ``assignment``."""
        assignment = {k: sympy.sympify(v) for k, v in (assignment or {}).items()}
        table = {sympy.Symbol(k): v for k, v in assignment.items()}
        out = {}
        for u in self.unknowns:
            if u in self.particular:
                out[u] = symcore.normalize(self.particular[u].xreplace(table))
            else:
                out[u] = assignment.get(u, sympy.Symbol(u))
        return out

    def to_dict(self) -> dict:
        return {
            "pivot_policy": self.pivot_policy,
            "particular": {k: symcore.to_string(v) for k, v in self.particular.items()},
            "free": list(self.free),
            "free_count": self.free_count,
            "homogeneous": [symcore.to_string(e) + " = 0" for e in self.homogeneous],
        }


PIVOT_POLICIES = ("diag", "last-diag", "auto")


def _policy_columns(chart: ChartSpec, policy: str) -> list[str] | None:
    m = chart.m
    if policy == "diag":
        return [g_name(chart, B, 0, 0) for B in range(chart.N)]
    if policy == "last-diag":
        return [g_name(chart, B, m - 1, m - 1) for B in range(chart.N)]
    if policy == "auto":
        return None
    raise LagrangianError(f"unknown pivot policy {policy!r}; choose from {PIVOT_POLICIES}")


def solve_regular(
    sys: ELSystem,
    hess: RegularityReport | sympy.Matrix | None = None,
    pivot: str = "diag",
    cfg: SimplifyConfig = DEFAULT_CONFIG,
) -> ELSolutionFamily:
    """Solve the Euler-Lagrange system for N pivot unknowns.

    ``diag`` pivots on ``G^B_{00}`` (first base index twice), ``last-diag`` on
    the last base index, ``auto`` takes the first usable column of each row.
    The remaining unknowns stay free.
    """
    if isinstance(hess, RegularityReport) and hess.verdict == Regularity.SINGULAR:
        raise LagrangianError("singular Lagrangian: use the singular constraint algorithm")
    unknowns = sys.unknowns
    rows = [({u: sys.matrix[A, j] for j, u in enumerate(unknowns)}, sys.rhs[A]) for A in range(sys.matrix.rows)]
    cols = _policy_columns(sys.chart, pivot)
    order = cols + [u for u in unknowns if u not in cols] if cols else list(unknowns)
    elim = eliminate(rows, unknowns, cfg, order=order)
    if elim.inconsistent or elim.rank < sys.matrix.rows:
        raise LagrangianError("Euler-Lagrange system is not of full rank: singular system")
    chosen = [col for _, col in elim.pivots]
    if cols and sorted(chosen) != sorted(cols):
        raise LagrangianError(f"pivot policy {pivot!r} does not give an invertible block; try 'auto'")
    particular = {}
    for r, col in elim.pivots:
        coeffs, b = elim.rows[r]
        expr = b - sum((coeffs[u] * sympy.Symbol(u) for u in unknowns if u != col), symcore.ZERO)
        particular[col] = symcore.normalize(expr / coeffs[col])
    free = [u for u in unknowns if u not in particular]
    homogeneous = [
        symcore.normalize(sum((sys.matrix[A, j] * sympy.Symbol(u) for j, u in enumerate(unknowns)), symcore.ZERO))
        for A in range(sys.matrix.rows)
    ]
    return ELSolutionFamily(sys.chart, list(unknowns), particular, free, pivot, homogeneous)


def g_table(chart: ChartSpec, values: Mapping[str, Expr]) -> list:
    m, N = chart.m, chart.N
    return [[[values[g_name(chart, B, mu, nu)] for nu in range(m)] for mu in range(m)] for B in range(N)]


@dataclass
class ELIntegrabilityReport:
    jet_field: JetFieldJ1
    symmetry: dict
    pde: dict
    el_residual: list[Expr]
    all_zero: bool
    numeric: bool

    def to_dict(self) -> dict:
        return {
            "G": self.jet_field.to_dict()["G"],
            "symmetry": {",".join(map(str, k)): symcore.to_string(v) for k, v in self.symmetry.items()},
            "pde": {",".join(map(str, k)): symcore.to_string(v) for k, v in self.pde.items()},
            "el_residual": [symcore.to_string(e) for e in self.el_residual],
            "integrable": self.all_zero,
            "confidence": "numeric" if self.numeric else "proven",
        }


def el_integrability_conditions(
    L: Lagrangian,
    fam: ELSolutionFamily,
    assignment: Mapping[str, Expr],
    cfg: SimplifyConfig = DEFAULT_CONFIG,
) -> ELIntegrabilityReport:
    missing = [u for u in fam.free if u not in assignment]
    if missing:
        raise LagrangianError(f"assignment misses free unknowns {missing}")
    values = fam.full(assignment)
    chart = L.chart.with_params(fam.unknowns)
    j = JetFieldJ1.sopde(chart, g_table(L.chart, values))
    cond = sopde_integrability_conditions(j, cfg)
    el = el_system(L).residual(values)
    verdicts = [symcore.is_zero(e, cfg) for e in cond.all() + el]
    return ELIntegrabilityReport(
        j, cond.symmetry, cond.pde, el,
        all(v.zero for v in verdicts), any(v.numeric for v in verdicts),
    )


# --------------------------------------------------------------------------
# Singular case


class SingularVerdict(str, enum.Enum):
    FINAL_SUBMANIFOLD = "FinalSubmanifold"
    NO_SOLUTION = "NoSolution"
    INCONCLUSIVE = "Inconclusive"


SURJECTIVITY_ASSUMPTION = "projection of each constraint submanifold onto the base is assumed onto"
CONSTANT_RANK_ASSUMPTION = "symbolic rank assumed constant on the chart (generic rank)"


@dataclass
class SingularLevel:
    level: int
    kind: str  # compatibility | tangency
    constraints: list[Expr]

    def to_dict(self) -> dict:
        return {"level": self.level, "kind": self.kind,
                "constraints": [symcore.to_string(e) for e in self.constraints]}


@dataclass
class SingularState:
    mode: str
    levels: list[SingularLevel]
    verdict: SingularVerdict
    unknowns: list[str]
    pivots: list[str]
    free: list[str]
    solution: dict[str, Expr]
    dimension: int | None
    witness: str | None = None
    numeric: bool = False
    assumptions: list[str] = field(default_factory=lambda: [SURJECTIVITY_ASSUMPTION, CONSTANT_RANK_ASSUMPTION])

    @property
    def constraints(self) -> list[Expr]:
        return [c for lvl in self.levels for c in lvl.constraints]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "verdict": self.verdict.value,
            "levels": [l.to_dict() for l in self.levels],
            "constraints": [symcore.to_string(e) for e in self.constraints],
            "dimension": self.dimension,
            "pivots": list(self.pivots),
            "free": list(self.free),
            "free_count": len(self.free),
            "solution": {k: symcore.to_string(v) for k, v in self.solution.items()},
            "witness": self.witness,
            "confidence": "numeric" if self.numeric else "proven",
            "assumptions": list(self.assumptions),
        }


def _el_rows_general(L: Lagrangian, with_F: bool) -> tuple[list[str], list[tuple[dict, Expr]]]:
    """Rows of ``i(X) Omega_L = 0`` for a factor set with unknown G (and F).

    With ``with_F`` the ``dv`` rows (``(F - v) * Hessian = 0``) are included
    and the ``dy`` rows keep the F-dependent terms; otherwise ``F = v``.
    """
    chart = L.chart
    m, N = chart.m, chart.N
    H = hessian(L)
    X = [sympy.Symbol(x) for x in chart.base]
    Y = [sympy.Symbol(y) for y in chart.fiber]
    gs = g_unknowns(chart)
    fs = [f_name(chart, B, mu) for B in range(N) for mu in range(m)] if with_F else []
    rows = []
    if with_F:
        for A in range(N):
            for nu in range(m):
                coeffs = {f_name(chart, B, mu): H[A * m + nu, B * m + mu] for B in range(N) for mu in range(m)}
                rhs = sum((H[A * m + nu, B * m + mu] * chart.v(B, mu) for B in range(N) for mu in range(m)), symcore.ZERO)
                rows.append((coeffs, rhs))
    for A in range(N):
        coeffs = {}
        for B, mu, nu in itertools.product(range(N), range(m), range(m)):
            coeffs[g_name(chart, B, mu, nu)] = H[A * m + mu, B * m + nu]
        rhs = L.dy(A)
        for mu in range(m):
            rhs -= sympy.diff(L.dv(A, mu), X[mu])
            for B in range(N):
                b = sympy.diff(L.dv(A, mu), Y[B])
                c = sympy.diff(L.dv(B, mu), Y[A])
                if with_F:
                    coeffs[f_name(chart, B, mu)] = coeffs.get(f_name(chart, B, mu), 0) + b - c
                    rhs -= c * chart.v(B, mu)
                else:
                    rhs -= b * chart.v(B, mu)
        rows.append((coeffs, rhs))
    return fs + gs, rows


def _tangency_rows(L: Lagrangian, c: Expr, with_F: bool) -> list[tuple[dict, Expr]]:
    """``X_mu(c) = 0`` as linear rows in the unknowns, one per base index."""
    chart = L.chart
    rows = []
    for mu, x in enumerate(chart.base):
        coeffs = {}
        rhs = -sympy.diff(c, sympy.Symbol(x))
        for A, y in enumerate(chart.fiber):
            dcy = sympy.diff(c, sympy.Symbol(y))
            if with_F:
                coeffs[f_name(chart, A, mu)] = dcy
            else:
                rhs -= chart.v(A, mu) * dcy
            for rho in range(chart.m):
                coeffs[g_name(chart, A, mu, rho)] = sympy.diff(c, chart.v(A, rho))
        rows.append((coeffs, symcore.normalize(rhs)))
    return rows


def singular_algorithm(
    L: Lagrangian,
    depth: int = 10,
    mode: str = "sopde",
    cfg: SimplifyConfig = DEFAULT_CONFIG,
    progress: Callable[[str], object] | None = None,
) -> SingularState:
    """Compatibility and tangency steps for (possibly singular) Lagrangians.

    ``mode="sopde"`` imposes ``F = v`` from the start.  ``mode="two-step"``
    first runs the constraint algorithm with ``F`` unknown and only then adds
    the SOPDE equations ``F = v``.
    """
    if mode not in ("sopde", "two-step"):
        raise LagrangianError(f"unknown mode {mode!r}")
    chart = L.chart
    two_step = mode == "two-step"
    unknowns, base_rows = _el_rows_general(L, with_F=two_step)
    preferred = list(chart.jet_names) + list(chart.fiber) + list(chart.base)
    n = len(chart.coords)
    levels: list[SingularLevel] = []
    constraints: list[Expr] = []
    processed: set[str] = set()
    extra_rows: list[tuple[dict, Expr]] = []
    numeric = False
    sopde_added = not two_step
    kind = "compatibility"
    last = None
    while True:
        reducer = Reducer(constraints, preferred, cfg)
        if reducer.inconsistent is not None:
            return _singular_done(mode, levels, SingularVerdict.NO_SOLUTION, unknowns, last, n - reducer.codimension,
                                  symcore.to_string(reducer.inconsistent), numeric)
        rows = [
            ({u: symcore.substitute(c, reducer.solution) for u, c in coeffs.items()},
             symcore.substitute(b, reducer.solution))
            for coeffs, b in base_rows + extra_rows
        ]
        elim = eliminate(rows, unknowns, cfg, progress=progress)
        last = elim
        numeric |= elim.numeric
        new = []
        for b in elim.inconsistent:
            red = reducer.reduce(b)
            numeric |= red.verdict.numeric
            if red.verdict.zero:
                continue
            if symcore.is_constant(red.value):
                levels.append(SingularLevel(len(levels) + 1, kind, [red.value]))
                return _singular_done(mode, levels, SingularVerdict.NO_SOLUTION, unknowns, elim,
                                      n - reducer.codimension, symcore.to_string(red.value), numeric)
            new.append(red.value)
        if new:
            levels.append(SingularLevel(len(levels) + 1, kind, new))
            constraints.extend(new)
            dim = n - Reducer(constraints, preferred, cfg).codimension
            if dim < chart.m:
                return _singular_done(mode, levels, SingularVerdict.NO_SOLUTION, unknowns, elim, dim,
                                      f"dimension {dim} below base dimension {chart.m}", numeric)
            kind = "tangency"
            if len(levels) >= depth:
                return _singular_done(mode, levels, SingularVerdict.INCONCLUSIVE, unknowns, elim, dim,
                                      f"depth bound {depth} reached", numeric)
            continue
        pending = [c for c in constraints if symcore.to_string(c) not in processed]
        if not pending:
            if not sopde_added:
                sopde_added = True
                for B in range(chart.N):
                    for mu in range(chart.m):
                        extra_rows.append(({f_name(chart, B, mu): symcore.ONE}, chart.v(B, mu)))
                # tangency must be re-examined with the SOPDE field
                processed.clear()
                kind = "compatibility (SOPDE)"
                continue
            return _singular_done(mode, levels, SingularVerdict.FINAL_SUBMANIFOLD, unknowns, elim,
                                  n - reducer.codimension, None, numeric)
        for c in pending:
            processed.add(symcore.to_string(c))
            extra_rows.extend(_tangency_rows(L, c, with_F=two_step))
        kind = "tangency"


def _singular_done(mode, levels, verdict, unknowns, elim: Elimination | None, dim, witness, numeric) -> SingularState:
    pivots, solution, free = [], {}, list(unknowns)
    if elim is not None and verdict != SingularVerdict.NO_SOLUTION:
        for r, col in elim.pivots:
            coeffs, b = elim.rows[r]
            expr = b - sum((coeffs[u] * sympy.Symbol(u) for u in unknowns if u != col), symcore.ZERO)
            solution[col] = symcore.normalize(expr / coeffs[col])
            pivots.append(col)
        free = [u for u in unknowns if u not in solution]
    return SingularState(mode, levels, verdict, list(unknowns), pivots, free, solution, dim, witness, numeric)


# --------------------------------------------------------------------------
# Sections


def total_derivative(L: Lagrangian, P: Expr, phi: Section, mu: int) -> Expr:
    """``d/dx^mu (P o j^1 phi)`` by the chain rule through the prolongation."""
    chart = L.chart
    X = [sympy.Symbol(x) for x in chart.base]
    psi = prolong_section(Section(chart, phi.f))
    val = sympy.diff(P, X[mu])
    for B, y in enumerate(chart.fiber):
        val += sympy.diff(P, sympy.Symbol(y)) * psi.g[B][mu]
        for nu in range(chart.m):
            val += sympy.diff(P, chart.v(B, nu)) * sympy.diff(phi.f[B], X[mu], X[nu])
    return _on_prolongation(chart, val, phi)


def _on_prolongation(chart: ChartSpec, e: Expr, phi: Section) -> Expr:
    X = [sympy.Symbol(x) for x in chart.base]
    values = {}
    for A, y in enumerate(chart.fiber):
        values[y] = phi.f[A]
        for mu in range(chart.m):
            values[chart.jet[A][mu]] = sympy.diff(phi.f[A], X[mu])
    return symcore.substitute(e, values)


def el_residual_on_section(L: Lagrangian, phi: Section) -> list[Expr]:
    """``(dL/dy^A) o j^1 phi - d/dx^mu[(dL/dv^A_mu) o j^1 phi]`` for each A."""
    chart = L.chart
    if phi.chart.coords != chart.coords:
        phi = Section(chart, phi.f)
    out = []
    for A in range(chart.N):
        val = _on_prolongation(chart, L.dy(A), phi)
        for mu in range(chart.m):
            val -= total_derivative(L, L.dv(A, mu), phi, mu)
        out.append(symcore.normalize(val))
    return out

"""Fixed-step Runge-Kutta m-flows and finite-difference residuals.

A section over a rectangular grid is filled by composing the one-parameter
flows of the factors: the value at ``(t_1, ..., t_m)`` is
``tau^1_{t_1} o ... o tau^m_{t_m}(p0)``, so the last factor is applied first.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import sympy

from . import symcore
from .geometry import ChartSpec, DecomposableMVF, GeometryError, VectorField
from .jet import ConnectionE, JetFieldJ1
from .lagrangian import Lagrangian


class NumericError(GeometryError):
    pass


class FlowError(NumericError):
    pass


BLOWUP = 1e12


@dataclass(frozen=True)
class FlowConfig:
    h: float = 1e-3
    order: int = 4
    commutation_tolerance: float = 1e-6
    residual_tolerance: float = 1e-6
    constraint_tolerance: float = 1e-9

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size must be positive")
        if self.order not in (2, 4):
            raise ValueError("integrator order must be 2 or 4")
        for name in ("commutation_tolerance", "residual_tolerance", "constraint_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class NumericSection:
    """Node values of every chart coordinate over a rectangular base grid."""

    chart: ChartSpec
    axes: tuple[np.ndarray, ...]
    values: dict[str, np.ndarray]

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        for a in self.axes:
            if a.ndim != 1 or len(a) < 1 or np.any(np.diff(a) <= 0):
                raise NumericError("grid axes must be strictly increasing")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    def spacing(self, mu: int) -> float:
        d = np.diff(self.axes[mu])
        if len(d) and not np.allclose(d, d[0], rtol=1e-9, atol=0):
            raise NumericError("finite differences need a uniform grid")
        return float(d[0]) if len(d) else 0.0

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def max_error(self, exact: Mapping[str, Expr]) -> float:
        """Max abs deviation from closed-form values given in the base coordinates."""
        mesh = self.mesh()
        worst = 0.0
        for name, e in exact.items():
            f = _lambdify(list(self.chart.base), [sympy.sympify(e)])
            ref = f(*mesh)[0]
            worst = max(worst, float(np.max(np.abs(self.values[name] - ref))))
        return worst

    def to_csv(self, target=None) -> str:
        """Header row of coordinate names, one node per line, 17 significant digits."""
        names = list(self.chart.base) + [q for q in self.chart.coords if q not in self.chart.base]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        mesh = self.mesh()
        cols = [m.ravel() for m in mesh] + [self.values[q].ravel() for q in names[self.chart.m:]]
        for row in zip(*cols):
            w.writerow([format(float(v), ".17g") for v in row])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


Expr = sympy.Expr


def _lambdify(names: Sequence[str], exprs: Sequence[Expr]):
    syms = [sympy.Symbol(n) for n in names]
    fn = sympy.lambdify(syms, list(exprs), modules="numpy")

    def call(*args):
        shape = np.broadcast(*args).shape if args else ()
        return [np.broadcast_to(np.asarray(r, dtype=float), shape) for r in fn(*args)]

    return call


class _Field:
    """Numeric right-hand side of one factor, acting on state arrays ``(n, batch)``."""

    def __init__(self, Y: VectorField):
        chart = Y.chart
        self.coords = list(chart.coords)
        self.fn = _lambdify(self.coords, [Y[q] for q in self.coords])

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return np.stack(self.fn(*state))


def _step(f: _Field, state: np.ndarray, dt: float, order: int) -> np.ndarray:
    if order == 4:
        k1 = f(state)
        k2 = f(state + 0.5 * dt * k1)
        k3 = f(state + 0.5 * dt * k2)
        k4 = f(state + dt * k3)
        return state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    k1 = f(state)
    return state + dt * f(state + 0.5 * dt * k1)


def _flow(f: _Field, state: np.ndarray, t: float, cfg: FlowConfig) -> np.ndarray:
    if t == 0:
        return state
    n = max(1, int(math.ceil(abs(t) / cfg.h - 1e-9)))
    dt = t / n
    for _ in range(n):
        state = _step(f, state, dt, cfg.order)
        if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > BLOWUP:
            raise FlowError("flow left the numerically safe region (component blow-up)")
    return state


def _along_axis(f: _Field, starts: np.ndarray, t0: float, nodes: np.ndarray, cfg: FlowConfig) -> np.ndarray:
    """Integrate from parameter ``t0`` outward to every node, both directions.

    ``starts`` has shape ``(n, batch)``; the result has shape ``(n, batch, len(nodes))``.
    """
    out = np.empty(starts.shape + (len(nodes),))
    above = [i for i, t in enumerate(nodes) if t >= t0]
    below = [i for i, t in enumerate(nodes) if t < t0][::-1]
    for seq in (above, below):
        state, t = starts, t0
        for i in seq:
            state = _flow(f, state, float(nodes[i]) - t, cfg)
            t = float(nodes[i])
            out[..., i] = state
    return out


def _point(chart: ChartSpec, p0) -> np.ndarray:
    if isinstance(p0, Mapping):
        missing = [q for q in chart.coords if q not in p0]
        if missing:
            raise NumericError(f"initial point misses coordinates {missing}")
        return np.array([float(p0[q]) for q in chart.coords])
    arr = np.asarray(p0, dtype=float)
    if arr.shape != (len(chart.coords),):
        raise NumericError(f"initial point needs {len(chart.coords)} coordinates")
    return arr


def _check_constraints(chart: ChartSpec, p: np.ndarray, constraints, tol: float) -> None:
    for c in constraints or ():
        fn = _lambdify(list(chart.coords), [c])
        val = float(fn(*p)[0])
        if abs(val) > tol:
            raise FlowError(f"initial point violates constraint {symcore.to_string(c)} by {val:.3g}")


def grid_axes(box: Sequence[Sequence[float]], points: int | Sequence[int]) -> list[np.ndarray]:
    if isinstance(points, int):
        points = [points] * len(box)
    return [np.linspace(float(lo), float(hi), int(n)) for (lo, hi), n in zip(box, points)]


def integrate_m_flow(
    Y: DecomposableMVF,
    p0,
    axes: Sequence[Sequence[float]],
    cfg: FlowConfig = FlowConfig(),
    constraints: Sequence[Expr] | None = None,
) -> NumericSection:
    """Fill a grid section through ``p0`` with the composed factor flows.

    ``axes`` lists the node values per base coordinate; ``Y`` must be
    normalized so that flowing factor ``mu`` for time ``t`` moves ``x^mu`` by
    ``t``.  ``constraints`` (the final constraint set of a branch) must
    vanish at ``p0`` within ``cfg.constraint_tolerance``.
    """
    chart = Y.chart
    if not Y.is_normalized():
        raise NumericError("integrate_m_flow needs normalized factors")
    if len(axes) != chart.m:
        raise NumericError("one grid axis per base coordinate is required")
    p = _point(chart, p0)
    _check_constraints(chart, p, constraints, cfg.constraint_tolerance)
    fields = [_Field(f) for f in Y.factors]
    axes = [np.asarray(a, dtype=float) for a in axes]
    state = p.reshape(-1, 1)
    for mu in reversed(range(chart.m)):
        out = _along_axis(fields[mu], state, float(p[mu]), axes[mu], cfg)
        state = out.reshape(out.shape[0], -1)
    # each pass appended its axis last, so the batch runs over (t_m, ..., t_1)
    grid = state.reshape((len(chart.coords),) + tuple(len(a) for a in reversed(axes)))
    grid = np.transpose(grid, (0,) + tuple(range(chart.m, 0, -1)))
    values = {q: grid[i] for i, q in enumerate(chart.coords) if q not in chart.base}
    for i, q in enumerate(chart.base):
        values[q] = grid[i]
    return NumericSection(chart, tuple(axes), values)


def flow_point(Y: VectorField, p0, t: float, cfg: FlowConfig = FlowConfig()) -> np.ndarray:
    p = _point(Y.chart, p0).reshape(-1, 1)
    return _flow(_Field(Y), p, t, cfg)[:, 0]


def check_flow_commutation(Y: DecomposableMVF, p0, t: float, s: float, cfg: FlowConfig = FlowConfig()) -> float:
    """Max over factor pairs of ``|tau^mu_t tau^nu_s p0 - tau^nu_s tau^mu_t p0|``."""
    chart = Y.chart
    p = _point(chart, p0).reshape(-1, 1)
    fields = [_Field(f) for f in Y.factors]
    worst = 0.0
    for mu, nu in itertools.combinations(range(chart.m), 2):
        a = _flow(fields[mu], _flow(fields[nu], p, s, cfg), t, cfg)
        b = _flow(fields[nu], _flow(fields[mu], p, t, cfg), s, cfg)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


# --------------------------------------------------------------------------
# Finite-difference residuals


def _d(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Central first difference; the result loses one node at each end of ``axis``."""
    n = arr.shape[axis]
    hi = np.take(arr, range(2, n), axis=axis)
    lo = np.take(arr, range(0, n - 2), axis=axis)
    return (hi - lo) / (2 * h)


def _trim(arr: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return arr
    return arr[tuple(slice(k, -k) for _ in range(arr.ndim))]


def _d_trimmed(arr: np.ndarray, mu: int, h: float) -> np.ndarray:
    """Central difference along ``mu`` with one node dropped on every side."""
    d = _d(arr, mu, h)
    sl = [slice(1, -1)] * arr.ndim
    sl[mu] = slice(None)
    return d[tuple(sl)]


def _d2(arr: np.ndarray, mu: int, rho: int, h: Sequence[float]) -> np.ndarray:
    if mu == rho:
        n = arr.shape[mu]
        a = np.take(arr, range(2, n), axis=mu)
        b = np.take(arr, range(1, n - 1), axis=mu)
        c = np.take(arr, range(0, n - 2), axis=mu)
        d = (a - 2 * b + c) / h[mu] ** 2
        sl = [slice(1, -1)] * arr.ndim
        sl[mu] = slice(None)
        return d[tuple(sl)]
    return _mixed(arr, mu, rho, h)


def _mixed(arr: np.ndarray, mu: int, rho: int, h: Sequence[float]) -> np.ndarray:
    d = _d(_d(arr, rho, h[rho]), mu, h[mu])
    sl = [slice(1, -1)] * arr.ndim
    sl[mu] = slice(None)
    sl[rho] = slice(None)
    return d[tuple(sl)]


def numeric_residual(obj, section: NumericSection, cfg: FlowConfig = FlowConfig()) -> float:
    """Max absolute finite-difference residual over interior nodes.

    ``obj`` is a :class:`Lagrangian` (Euler-Lagrange residual, nested central
    differences), a :class:`JetFieldJ1` (first- and second-order equations of
    its integral sections) or a :class:`ConnectionE`.
    """
    chart = section.chart
    m = len(section.axes)
    if isinstance(obj, Lagrangian):
        need = 5
    elif isinstance(obj, (JetFieldJ1, ConnectionE)):
        need = 3
    else:
        raise NumericError(f"cannot form residuals for {type(obj).__name__}")
    if any(n < need for n in section.shape):
        raise NumericError(f"grid too small for the stencil: need {need} nodes per axis")
    h = [section.spacing(mu) for mu in range(m)]
    base = list(obj.chart.base)
    fiber = list(obj.chart.fiber)
    mesh = section.mesh()
    f = [np.asarray(section.values[y], dtype=float) for y in fiber]

    if isinstance(obj, ConnectionE):
        args = _args(base, fiber, None, mesh, f, 1)
        worst = 0.0
        for A in range(len(fiber)):
            for mu in range(m):
                g = _lambdify(base + fiber, [obj.Gamma[A][mu]])(*args)[0]
                worst = max(worst, float(np.max(np.abs(_d_trimmed(f[A], mu, h[mu]) - g))))
        return worst

    if isinstance(obj, JetFieldJ1):
        df = [[_d_trimmed(f[A], mu, h[mu]) for mu in range(m)] for A in range(len(fiber))]
        args = _args(base, fiber, obj.chart.jet, mesh, f, 1, df)
        names = base + fiber + list(obj.chart.jet_names)
        worst = 0.0
        for A in range(len(fiber)):
            for mu in range(m):
                F = _lambdify(names, [obj.F[A][mu]])(*args)[0]
                worst = max(worst, float(np.max(np.abs(df[A][mu] - F))))
                for rho in range(m):
                    G = _lambdify(names, [obj.G[A][mu][rho]])(*args)[0]
                    worst = max(worst, float(np.max(np.abs(_d2(f[A], mu, rho, h) - G))))
        return worst

    # Euler-Lagrange residual: dL/dy - d/dx^mu (dL/dv_mu), both on the jet of the section
    L = obj
    df = [[_d_trimmed(f[A], mu, h[mu]) for mu in range(m)] for A in range(len(fiber))]
    args = _args(base, fiber, L.chart.jet, mesh, f, 1, df)
    names = base + fiber + list(L.chart.jet_names)
    worst = 0.0
    for A in range(len(fiber)):
        res = _trim(_lambdify(names, [L.dy(A)])(*args)[0], 1)
        for mu in range(m):
            p = _lambdify(names, [L.dv(A, mu)])(*args)[0]
            res = res - _d_trimmed(p, mu, h[mu])
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def _args(base, fiber, jet, mesh, f, trim, df=None):
    out = [_trim(x, trim) for x in mesh] + [_trim(v, trim) for v in f]
    if df is not None:
        out += [df[A][mu] for A in range(len(fiber)) for mu in range(len(base))]
    return out


def sample_section(chart: ChartSpec, f: Sequence[Expr], axes: Sequence[Sequence[float]]) -> NumericSection:
    """Evaluate a closed-form section on a grid (fiber values only)."""
    axes = [np.asarray(a, dtype=float) for a in axes]
    mesh = np.meshgrid(*axes, indexing="ij")
    fn = _lambdify(list(chart.base), list(f))
    vals = fn(*mesh)
    values = {y: np.array(v, dtype=float) for y, v in zip(chart.fiber, vals)}
    return NumericSection(chart, tuple(axes), values)

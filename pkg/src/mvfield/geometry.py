"""Vector fields, decomposable multivector fields and the integrability algorithm."""

from __future__ import annotations

import enum
import itertools
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import sympy

from . import symcore
from .symcore import DEFAULT_CONFIG, Expr, SimplifyConfig, Verdict


class GeometryError(ValueError):
    pass


class ChartMismatchError(GeometryError):
    pass


class NotNormalizedError(GeometryError):
    pass


# --------------------------------------------------------------------------
# Charts


def _labels(names: Sequence[str]) -> list[str]:
    """Index labels for jet coordinate names: trailing digits when they are
    present and distinct, otherwise 1-based positions."""
    digits = []
    for name in names:
        m = re.search(r"(\d+)$", name)
        digits.append(m.group(1) if m else None)
    if all(d is not None for d in digits) and len(set(digits)) == len(digits):
        return digits
    return [str(i + 1) for i in range(len(names))]


@dataclass(frozen=True)
class ChartSpec:
    """Adapted coordinates ``(x^mu, y^A[, v^A_mu])`` on a bundle chart.

    ``jet[A][mu]`` is the name of ``v^A_mu`` when the chart is a jet chart.
    ``params`` are extra symbols (constants, unknown coefficients) allowed in
    expressions but not coordinates.
    """

    base: tuple[str, ...]
    fiber: tuple[str, ...]
    jet: tuple[tuple[str, ...], ...] | None = None
    params: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.base) < 1 or len(self.fiber) < 1:
            raise GeometryError("a chart needs at least one base and one fiber coordinate")
        names = list(self.base) + list(self.fiber)
        if self.jet is not None:
            if len(self.jet) != len(self.fiber) or any(len(r) != len(self.base) for r in self.jet):
                raise GeometryError("jet coordinates must form an N x m table")
            names += [v for row in self.jet for v in row]
        names += list(self.params)
        for name in names:
            symcore.symbol(name)
        if len(set(names)) != len(names):
            raise GeometryError(f"coordinate names are not distinct: {names}")

    @classmethod
    def make(cls, base, fiber, jet: bool = False, params=()) -> "ChartSpec":
        base, fiber = tuple(base), tuple(fiber)
        table = None
        if jet:
            bl, fl = _labels(base), _labels(fiber)
            table = tuple(tuple(f"v{fl[a]}_{bl[mu]}" for mu in range(len(base))) for a in range(len(fiber)))
        return cls(base, fiber, table, tuple(params))

    @property
    def m(self) -> int:
        return len(self.base)

    @property
    def N(self) -> int:
        return len(self.fiber)

    @property
    def is_jet(self) -> bool:
        return self.jet is not None

    @property
    def jet_names(self) -> tuple[str, ...]:
        return tuple(v for row in (self.jet or ()) for v in row)

    @property
    def coords(self) -> tuple[str, ...]:
        return self.base + self.fiber + self.jet_names

    @property
    def vertical(self) -> tuple[str, ...]:
        """Non-base coordinates: the complement frame of the integrability algorithm."""
        return self.fiber + self.jet_names

    @property
    def allowed(self) -> frozenset[str]:
        return frozenset(self.coords + self.params)

    def v(self, a: int, mu: int) -> sympy.Symbol:
        return sympy.Symbol(self.jet[a][mu])

    def with_params(self, extra) -> "ChartSpec":
        extra = tuple(p for p in extra if p not in self.params)
        return ChartSpec(self.base, self.fiber, self.jet, self.params + extra)

    def without_jet(self) -> "ChartSpec":
        return ChartSpec(self.base, self.fiber, None, self.params)

    def parse(self, text: str) -> Expr:
        return symcore.parse(text, self.allowed)

    def to_dict(self) -> dict:
        d = {"base": list(self.base), "fiber": list(self.fiber)}
        if self.jet is not None:
            d["jet"] = [list(r) for r in self.jet]
        if self.params:
            d["params"] = list(self.params)
        return d


# --------------------------------------------------------------------------
# Vector fields


@dataclass(frozen=True)
class VectorField:
    chart: ChartSpec
    components: Mapping[str, Expr]

    def __post_init__(self):
        comps = {}
        for name, value in self.components.items():
            if name not in self.chart.coords:
                raise GeometryError(f"{name!r} is not a coordinate of the chart")
            value = symcore.normalize(sympy.sympify(value))
            if value != 0:
                comps[name] = value
        object.__setattr__(self, "components", dict(sorted(comps.items(), key=lambda kv: self.chart.coords.index(kv[0]))))

    @classmethod
    def coordinate(cls, chart: ChartSpec, name: str) -> "VectorField":
        return cls(chart, {name: symcore.ONE})

    def __getitem__(self, name: str) -> Expr:
        return self.components.get(name, symcore.ZERO)

    def __call__(self, f: Expr) -> Expr:
        """Derivative of the function ``f`` along this field."""
        return symcore.derivation(f, self.components)

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_chart(self, other)
        names = set(self.components) | set(other.components)
        return VectorField(self.chart, {q: self[q] + other[q] for q in names})

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + other.scaled(-1)

    def scaled(self, f) -> "VectorField":
        f = sympy.sympify(f)
        return VectorField(self.chart, {q: f * c for q, c in self.components.items()})

    def is_zero(self, cfg: SimplifyConfig = DEFAULT_CONFIG) -> bool:
        return all(symcore.is_zero(c, cfg).zero for c in self.components.values())

    def to_dict(self) -> dict:
        return {q: symcore.to_string(c) for q, c in self.components.items()}

    def __str__(self):
        if not self.components:
            return "0"
        return " + ".join(f"({symcore.to_string(c)})*d/d{q}" for q, c in self.components.items())


def _same_chart(a, b):
    if a.chart.coords != b.chart.coords:
        raise ChartMismatchError("vector fields live on different charts")


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """``[X, Y]^a = X(Y^a) - Y(X^a)``."""
    _same_chart(X, Y)
    comps = {q: X(Y[q]) - Y(X[q]) for q in X.chart.coords}
    return VectorField(X.chart, comps)


@dataclass(frozen=True)
class DecomposableMVF:
    """``scale * Y_1 ^ ... ^ Y_m`` on a chart."""

    chart: ChartSpec
    factors: tuple[VectorField, ...]
    scale: Expr = symcore.ONE

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if len(self.factors) != self.chart.m:
            raise GeometryError(
                f"need {self.chart.m} factors (base dimension), got {len(self.factors)}"
            )
        for f in self.factors:
            _same_chart(self, f)
        if symcore.is_zero(self.scale) == Verdict.PROVEN_ZERO:
            raise GeometryError("scale of a multivector field must not vanish")

    def base_matrix(self) -> sympy.Matrix:
        return sympy.Matrix([[f[x] for x in self.chart.base] for f in self.factors])

    def is_normalized(self) -> bool:
        base = self.chart.base
        return all(
            symcore.normalize(f[x] - (1 if i == j else 0)) == 0
            for i, f in enumerate(self.factors)
            for j, x in enumerate(base)
        )

    def to_dict(self) -> dict:
        return {
            "factors": [f.to_dict() for f in self.factors],
            "scale": symcore.to_string(self.scale),
        }


def flat_mvf(chart: ChartSpec) -> DecomposableMVF:
    return DecomposableMVF(chart, tuple(VectorField.coordinate(chart, x) for x in chart.base))


# --------------------------------------------------------------------------
# Transversality and normal form


@dataclass
class TransversalityResult:
    transverse: bool
    determinant: Expr
    verdict: Verdict

    def __bool__(self):
        return self.transverse


def transversality_check(Y: DecomposableMVF, cfg: SimplifyConfig = DEFAULT_CONFIG) -> TransversalityResult:
    """The factors' base block must have a non-vanishing determinant."""
    det = symcore.normalize(Y.base_matrix().det(method="bareiss"))
    verdict = symcore.is_zero(det, cfg)
    return TransversalityResult(not verdict.zero, det, verdict)


def normalize_factors(Y: DecomposableMVF, cfg: SimplifyConfig = DEFAULT_CONFIG) -> DecomposableMVF:
    """Recombine the factors so the base block becomes the identity.

    The new factors span the same distribution; the scale absorbs the
    determinant of the recombination.
    """
    check = transversality_check(Y, cfg)
    if not check.transverse:
        raise GeometryError("multivector field is not transverse: base block determinant vanishes")
    B = Y.base_matrix()
    try:
        inv = B.inv(method="LU") if B.shape[0] > 1 else sympy.Matrix([[1 / B[0, 0]]])
    except (ValueError, ZeroDivisionError) as exc:
        raise GeometryError(f"base block is not invertible: {exc}") from exc
    chart = Y.chart
    m = chart.m
    new = []
    for mu in range(m):
        comps = {}
        for q in chart.coords:
            comps[q] = sum((inv[mu, k] * Y.factors[k][q] for k in range(m)), symcore.ZERO)
        new.append(VectorField(chart, comps))
    return DecomposableMVF(chart, tuple(new), symcore.normalize(Y.scale * check.determinant))


# --------------------------------------------------------------------------
# Involutivity


@dataclass
class InvolutivityDefect:
    """Coefficients of ``[Y_mu, Y_nu] = xi^rho Y_rho + zeta^l Z_l`` for mu < nu.

    ``xi[(mu, nu, rho)]`` uses 0-based factor indices; ``zeta[(mu, nu, q)]``
    is keyed by the vertical coordinate name ``q`` whose coordinate field is
    ``Z_l``.
    """

    xi: dict[tuple[int, int, int], Expr]
    zeta: dict[tuple[int, int, str], Expr]

    def nonzero_zeta(self, cfg: SimplifyConfig = DEFAULT_CONFIG):
        out = []
        for key, value in self.zeta.items():
            verdict = symcore.is_zero(value, cfg)
            if not verdict.zero:
                out.append((key, value, verdict))
        return out

    def involutive(self, cfg: SimplifyConfig = DEFAULT_CONFIG) -> bool:
        return not self.nonzero_zeta(cfg)

    def to_dict(self) -> dict:
        return {
            "xi": {f"{k[0]},{k[1]},{k[2]}": symcore.to_string(v) for k, v in self.xi.items()},
            "zeta": {f"{k[0]},{k[1]},{k[2]}": symcore.to_string(v) for k, v in self.zeta.items()},
        }


def involutivity_defect(Y: DecomposableMVF) -> InvolutivityDefect:
    if not Y.is_normalized():
        raise NotNormalizedError(
            "factors must have the Kronecker base pattern; normalize them first"
        )
    chart = Y.chart
    m = chart.m
    xi, zeta = {}, {}
    for mu, nu in itertools.combinations(range(m), 2):
        br = lie_bracket(Y.factors[mu], Y.factors[nu])
        coeffs = [br[x] for x in chart.base]
        for rho in range(m):
            xi[(mu, nu, rho)] = coeffs[rho]
        for q in chart.vertical:
            val = br[q] - sum((coeffs[rho] * Y.factors[rho][q] for rho in range(m)), symcore.ZERO)
            zeta[(mu, nu, q)] = symcore.normalize(val)
    return InvolutivityDefect(xi, zeta)


# --------------------------------------------------------------------------
# Constraint sets and reduction


@dataclass(frozen=True)
class Constraint:
    expr: Expr
    provenance: str

    def to_dict(self) -> dict:
        return {"expr": symcore.to_string(self.expr), "provenance": self.provenance}


class ConstraintSet:
    """Constraints with provenance labels.  Zero and duplicate entries are dropped."""

    def __init__(self, constraints: Sequence[Constraint] = ()):
        self._items: list[Constraint] = []
        seen = set()
        for c in constraints:
            e = symcore.normalize(c.expr)
            if e == 0:
                continue
            key = symcore.to_string(e)
            neg = symcore.to_string(symcore.normalize(-e))
            if key in seen or neg in seen:
                continue
            seen.add(key)
            self._items.append(Constraint(e, c.provenance))

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    @property
    def exprs(self) -> list[Expr]:
        return [c.expr for c in self._items]

    def extended(self, more: Sequence[Constraint]) -> "ConstraintSet":
        return ConstraintSet(list(self._items) + list(more))

    def contains(self, other: "ConstraintSet") -> bool:
        mine = {symcore.to_string(c.expr) for c in self._items}
        return all(symcore.to_string(c.expr) in mine for c in other)

    def to_list(self) -> list[dict]:
        return [c.to_dict() for c in self._items]


@dataclass
class Reduction:
    value: Expr
    verdict: Verdict


class Reducer:
    """Reduction of expressions modulo a set of constraints.

    Constraints that are linear with a constant coefficient in some variable
    are solved and substituted exactly (fiber-type coordinates are preferred
    as the solved variable).  Any remaining implicit constraints are handled
    by testing on numerically sampled points of their zero set.
    """

    def __init__(self, constraints: Sequence[Expr], preferred: Sequence[str], cfg: SimplifyConfig = DEFAULT_CONFIG):
        self.cfg = cfg
        self.preferred = list(preferred)
        self.solution: dict[str, Expr] = {}
        self.implicit: list[Expr] = []
        self.inconsistent: Expr | None = None
        for c in constraints:
            self._add(c)

    def _add(self, c: Expr) -> None:
        r = symcore.substitute(c, self.solution) if self.solution else symcore.normalize(c)
        if r == 0:
            return
        if symcore.is_constant(r):
            self.inconsistent = r
            return
        solved = symcore.linear_solve_for(r, self.preferred)
        if solved is None:
            self.implicit.append(r)
            return
        name, value = solved
        self.solution = {k: symcore.substitute(v, {name: value}) for k, v in self.solution.items()}
        self.solution[name] = value
        pending, self.implicit = self.implicit, []
        for e in pending:
            self._add(e)

    @property
    def codimension(self) -> int:
        return len(self.solution) + len(self.implicit)

    def reduce(self, e: Expr) -> Reduction:
        value = symcore.substitute(e, self.solution)
        verdict = symcore.is_zero(value, self.cfg)
        if verdict.zero or not self.implicit:
            return Reduction(value, verdict)
        if symcore.is_constant(value):
            return Reduction(value, verdict)
        return Reduction(value, self._sampled_membership(value))

    def _sampled_membership(self, value: Expr) -> Verdict:
        """Evaluate ``value`` at points of the implicit constraints' zero set."""
        rng = random.Random(self.cfg.seed)
        names = sorted(set().union(*(symcore.free_names(c) for c in self.implicit)) | symcore.free_names(value))
        good = 0
        for _ in range(40 * self.cfg.samples):
            if good >= self.cfg.samples:
                break
            point = {n: float(Fraction(rng.randint(-30, 30), rng.randint(1, 7))) for n in names}
            ok = True
            for c in self.implicit:
                solved = _solve_numeric(c, point, self.preferred)
                if solved is None:
                    ok = False
                    break
                point.update(solved)
            if not ok:
                continue
            try:
                val = complex(sympy.N(value.subs({sympy.Symbol(k): v for k, v in point.items()}), 30))
            except (TypeError, ZeroDivisionError, ValueError):
                continue
            if not np.isfinite(val.real) or abs(val.imag) > 1e-8:
                continue
            if abs(val.real) > max(self.cfg.tolerance, 1e-8):
                return Verdict.NUMERICALLY_NONZERO
            good += 1
        if good == 0:
            raise symcore.ZeroTestError(
                f"no sample points found on the constraint set for {symcore.to_string(value)}"
            )
        return Verdict.NUMERICALLY_ZERO


def _solve_numeric(c: Expr, point: dict, preferred: Sequence[str]) -> dict | None:
    names = [n for n in preferred if n in symcore.free_names(c)] + sorted(symcore.free_names(c))
    for name in names:
        s = sympy.Symbol(name)
        others = {sympy.Symbol(k): sympy.Rational(Fraction(v).limit_denominator(10**6)) for k, v in point.items() if k != name}
        e = sympy.sympify(c).subs(others)
        if e.free_symbols != {s}:
            continue
        if symcore.is_polynomial(e):
            roots = [complex(r) for r in sympy.Poly(e, s).nroots(n=30)]
            real = sorted(r.real for r in roots if abs(r.imag) < 1e-12)
            if real:
                return {name: real[0]}
            continue
        try:
            root = sympy.nsolve(e, s, point.get(name, 0.5), prec=30)
            return {name: float(root)}
        except (ValueError, ZeroDivisionError, TypeError):
            continue
    return None


# --------------------------------------------------------------------------
# Integrability algorithm


class NodeVerdict(str, enum.Enum):
    INTEGRABLE_EVERYWHERE = "IntegrableEverywhere"
    INTEGRABLE_ON_SUBMANIFOLD = "IntegrableOnSubmanifold"
    NO_SOLUTION = "NoSolution"
    INCONCLUSIVE = "Inconclusive"


REGULARITY_ASSUMPTION = "each constraint set E_i is assumed to be a closed submanifold"


@dataclass
class BranchNode:
    id: str
    level: int
    constraints: ConstraintSet
    verdict: NodeVerdict | None = None
    dynamical: bool | None = None
    witness: dict | None = None
    children: list["BranchNode"] = field(default_factory=list)
    numeric: bool = False
    dimension: int | None = None

    def leaves(self):
        if not self.children:
            yield self
        for c in self.children:
            yield from c.leaves()

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "level": self.level,
            "constraints": self.constraints.to_list(),
            "verdict": self.verdict.value if self.verdict else None,
            "confidence": "numeric" if self.numeric else "proven",
        }
        if self.dimension is not None:
            d["dimension"] = self.dimension
        if self.dynamical is not None:
            d["dynamical"] = self.dynamical
        if self.witness is not None:
            d["witness"] = self.witness
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d


@dataclass
class BranchTree:
    root: BranchNode
    defect: InvolutivityDefect
    assumptions: list[str] = field(default_factory=list)

    @property
    def verdict(self) -> NodeVerdict:
        return self.root.verdict

    @property
    def confidence(self) -> str:
        return "numeric" if any(n.numeric for n in self.root.walk()) else "proven"

    def leaves(self) -> list[BranchNode]:
        return list(self.root.leaves())

    def find(self, constraint: Expr) -> BranchNode | None:
        """Leaf whose constraint set includes ``constraint`` (up to sign)."""
        e = symcore.normalize(constraint)
        for leaf in self.leaves():
            for c in leaf.constraints.exprs:
                if symcore.normalize(c - e) == 0 or symcore.normalize(c + e) == 0:
                    return leaf
        return None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "confidence": self.confidence,
            "defect": self.defect.to_dict(),
            "tree": self.root.to_dict(),
            "assumptions": list(self.assumptions),
        }


MAX_BRANCHES = 64


def _aggregate(children: list[BranchNode]) -> NodeVerdict:
    verdicts = {c.verdict for c in children}
    if NodeVerdict.INTEGRABLE_ON_SUBMANIFOLD in verdicts or NodeVerdict.INTEGRABLE_EVERYWHERE in verdicts:
        return NodeVerdict.INTEGRABLE_ON_SUBMANIFOLD
    if NodeVerdict.INCONCLUSIVE in verdicts:
        return NodeVerdict.INCONCLUSIVE
    return NodeVerdict.NO_SOLUTION


class _Runner:
    def __init__(self, Y: DecomposableMVF, defect: InvolutivityDefect, cfg: SimplifyConfig, depth: int):
        self.Y = Y
        self.defect = defect
        self.cfg = cfg
        self.depth = depth
        chart = Y.chart
        self.preferred = list(chart.vertical) + list(chart.base) + list(chart.params)
        self.n = len(chart.coords)

    def branch(self, parent: BranchNode, new: list[tuple[Expr, bool]], provenance: str) -> None:
        """Factor the new constraints and open one child per factor choice."""
        choices = []
        for expr, numeric in new:
            factors = symcore.factor_constraint(expr)
            choices.append([(f, numeric) for f in factors])
        combos = list(itertools.product(*choices))
        if len(combos) > MAX_BRANCHES:
            parent.verdict = NodeVerdict.INCONCLUSIVE
            parent.witness = {"reason": f"{len(combos)} branches exceed the limit {MAX_BRANCHES}"}
            return
        seen = set()
        for i, combo in enumerate(combos):
            cons = parent.constraints.extended([Constraint(f, provenance) for f, _ in combo])
            key = tuple(sorted(symcore.to_string(e) for e in cons.exprs))
            if key in seen:
                continue
            seen.add(key)
            child = BranchNode(
                id=f"{parent.id}.{len(parent.children)}",
                level=parent.level + 1,
                constraints=cons,
                numeric=parent.numeric or any(num for _, num in combo),
            )
            parent.children.append(child)
            self.tangency(child, [f for f, _ in combo])
        parent.verdict = _aggregate(parent.children)
        parent.numeric = parent.numeric or any(c.numeric for c in parent.children)

    def tangency(self, node: BranchNode, newest: list[Expr]) -> None:
        reducer = Reducer(node.constraints.exprs, self.preferred, self.cfg)
        if reducer.inconsistent is not None:
            node.verdict = NodeVerdict.NO_SOLUTION
            node.witness = {"inconsistent": symcore.to_string(reducer.inconsistent)}
            return
        node.dimension = self.n - reducer.codimension
        if node.dimension < self.Y.chart.m:
            node.verdict = NodeVerdict.NO_SOLUTION
            node.witness = {"reason": f"dimension {node.dimension} below base dimension {self.Y.chart.m}"}
            return
        additions: list[tuple[Expr, bool]] = []
        for zeta in newest:
            for mu, Ymu in enumerate(self.Y.factors):
                try:
                    red = reducer.reduce(Ymu(zeta))
                except symcore.ZeroTestError as exc:
                    node.verdict = NodeVerdict.INCONCLUSIVE
                    node.witness = {"undecided": symcore.to_string(Ymu(zeta)), "reason": str(exc)}
                    return
                node.numeric = node.numeric or red.verdict.numeric
                if red.verdict.zero:
                    continue
                if symcore.is_constant(red.value):
                    node.verdict = NodeVerdict.NO_SOLUTION
                    node.witness = {
                        "factor": mu + 1,
                        "constraint": symcore.to_string(zeta),
                        "reduced": symcore.to_string(red.value),
                    }
                    return
                additions.append((red.value, red.verdict.numeric))
        if not additions:
            node.verdict = NodeVerdict.INTEGRABLE_ON_SUBMANIFOLD
            node.dynamical = self._dynamical(reducer, node)
            return
        if node.level >= self.depth:
            node.verdict = NodeVerdict.INCONCLUSIVE
            node.witness = {"reason": f"depth bound {self.depth} reached",
                            "pending": [symcore.to_string(e) for e, _ in additions]}
            return
        self.branch(node, additions, f"tangency level {node.level + 1}")

    def _dynamical(self, reducer: Reducer | None, node: BranchNode) -> bool:
        for value in self.defect.xi.values():
            if reducer is None:
                verdict = symcore.is_zero(value, self.cfg)
            else:
                try:
                    verdict = reducer.reduce(value).verdict
                except symcore.ZeroTestError:
                    return False
            node.numeric = node.numeric or verdict.numeric
            if not verdict.zero:
                return False
        return True


def integrability_algorithm(
    Y: DecomposableMVF, cfg: SimplifyConfig = DEFAULT_CONFIG, depth: int = 10
) -> BranchTree:
    """Find where a normalized transverse multivector field is integrable.

    The root node stands for the whole chart.  Nonvanishing involutivity
    coefficients become constraints, are factored over the rationals and
    explored branch by branch; each branch then iterates the tangency
    condition ``Y_mu(zeta) = 0`` on its constraint set until nothing new
    appears (integrable there), a nonzero constant shows up (no solution) or
    the depth bound is hit (inconclusive).
    """
    defect = involutivity_defect(Y)
    runner = _Runner(Y, defect, cfg, depth)
    root = BranchNode(id="root", level=0, constraints=ConstraintSet())
    root.dimension = runner.n
    e1 = []
    for key, value, verdict in defect.nonzero_zeta(cfg):
        root.numeric = root.numeric or verdict.numeric
        e1.append((value, verdict.numeric))
    for value in defect.zeta.values():
        if symcore.is_zero(value, cfg).numeric:
            root.numeric = True
    if not e1:
        root.verdict = NodeVerdict.INTEGRABLE_EVERYWHERE
        root.dynamical = runner._dynamical(None, root)
    else:
        constants = [v for v, _ in e1 if symcore.is_constant(v)]
        if constants:
            root.verdict = NodeVerdict.NO_SOLUTION
            root.witness = {"integrability": symcore.to_string(constants[0])}
        else:
            runner.branch(root, e1, "integrability")
    return BranchTree(root, defect, [REGULARITY_ASSUMPTION])

import random

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from mvfield import symcore
from mvfield.geometry import (
    ChartMismatchError,
    ChartSpec,
    DecomposableMVF,
    NodeVerdict,
    NotNormalizedError,
    VectorField,
    flat_mvf,
    integrability_algorithm,
    involutivity_defect,
    lie_bracket,
    normalize_factors,
    transversality_check,
)

from tests.helpers import example_fields, random_poly


def vf(chart, **comps):
    return VectorField(chart, {k: chart.parse(v) for k, v in comps.items()})


def test_chart_rejects_duplicate_names():
    with pytest.raises(ValueError):
        ChartSpec.make(["x1", "x1"], ["y"])


def test_coordinate_fields_commute(plane_chart):
    X = VectorField.coordinate(plane_chart, "x1")
    Y = VectorField.coordinate(plane_chart, "x2")
    assert lie_bracket(X, Y).is_zero()


def test_example_bracket():
    chart, Y = example_fields()
    br = lie_bracket(*Y.factors)
    assert symcore.normalize(br["y1"] - chart.parse("(x1+x2-y1)^2-1")) == 0
    assert br["y2"] == 0 and br["x1"] == 0 and br["x2"] == 0


def test_leibniz_bracket():
    chart = ChartSpec.make(["x"], ["y"])
    f = chart.parse("x^3*y + x")
    X = VectorField(chart, {"x": f})
    D = VectorField.coordinate(chart, "x")
    br = lie_bracket(X, D)
    assert symcore.normalize(br["x"] + sympy.diff(f, sympy.Symbol("x"))) == 0


def test_bracket_chart_mismatch(plane_chart):
    other = ChartSpec.make(["x1", "x2"], ["y1"])
    with pytest.raises(ChartMismatchError):
        lie_bracket(VectorField.coordinate(plane_chart, "x1"), VectorField.coordinate(other, "x1"))


def test_involutivity_defect_example():
    chart, Y = example_fields()
    d = involutivity_defect(Y)
    nonzero = d.nonzero_zeta()
    assert len(nonzero) == 1
    (key, value, _), = nonzero
    assert key == (0, 1, "y1")
    assert symcore.normalize(value - chart.parse("(x1+x2-y1)^2-1")) == 0
    assert all(v == 0 for v in d.xi.values())


def test_flat_and_linear_fields_involutive(plane_chart):
    assert involutivity_defect(flat_mvf(plane_chart)).involutive()
    chart = ChartSpec.make(["x1", "x2"], ["y"])
    Y = DecomposableMVF(chart, (vf(chart, x1="1", y="y"), vf(chart, x2="1")))
    d = involutivity_defect(Y)
    assert d.involutive() and all(v == 0 for v in d.xi.values())


def test_defect_requires_normalized_factors(plane_chart):
    Y = DecomposableMVF(plane_chart, (vf(plane_chart, x1="2"), vf(plane_chart, x2="1")))
    with pytest.raises(NotNormalizedError):
        involutivity_defect(Y)


def test_defect_reconstructs_bracket():
    rng = random.Random(11)
    chart = ChartSpec.make(["x1", "x2"], ["y1", "y2"])
    for _ in range(10):
        f = [VectorField(chart, {"x1": 1 if mu == 0 else 0, "x2": 1 if mu == 1 else 0,
                                 **{y: random_poly(rng, chart.coords, 2) for y in chart.fiber}})
             for mu in range(2)]
        d = involutivity_defect(DecomposableMVF(chart, tuple(f)))
        br = lie_bracket(f[0], f[1])
        for q in chart.coords:
            rebuilt = sum((d.xi[(0, 1, r)] * f[r][q] for r in range(2)), sympy.Integer(0))
            rebuilt += d.zeta.get((0, 1, q), 0)
            assert symcore.is_zero(rebuilt - br[q]) is symcore.Verdict.PROVEN_ZERO


def test_integrability_example_tree():
    chart, Y = example_fields()
    tree = integrability_algorithm(Y)
    assert tree.verdict is NodeVerdict.INTEGRABLE_ON_SUBMANIFOLD
    a = tree.find(chart.parse("x1+x2-y1-1"))
    b = tree.find(chart.parse("x1+x2-y1+1"))
    assert a.verdict is NodeVerdict.NO_SOLUTION
    assert a.witness["reduced"] == "2"
    assert b.verdict is NodeVerdict.INTEGRABLE_ON_SUBMANIFOLD
    assert len(b.constraints) == 1


def test_integrability_flat_everywhere(plane_chart):
    tree = integrability_algorithm(flat_mvf(plane_chart))
    assert tree.verdict is NodeVerdict.INTEGRABLE_EVERYWHERE
    assert tree.root.dynamical is True


def test_integrability_constant_defect_has_no_solution():
    chart = ChartSpec.make(["x1", "x2"], ["y"])
    Y = DecomposableMVF(chart, (vf(chart, x1="1", y="x2"), vf(chart, x2="1")))
    assert integrability_algorithm(Y).verdict is NodeVerdict.NO_SOLUTION


def chain_fields():
    # zeta gives y1 = y2 = 0, tangency then adds y3 = 0 one level later
    chart = ChartSpec.make(["x1", "x2"], ["y1", "y2", "y3"])
    return DecomposableMVF(chart, (vf(chart, x1="1", y1="y2", y2="y3"), vf(chart, x2="1", y3="y1")))


def test_integrability_iterates_tangency():
    tree = integrability_algorithm(chain_fields())
    leaf, = tree.leaves()
    assert leaf.verdict is NodeVerdict.INTEGRABLE_ON_SUBMANIFOLD
    assert leaf.level == 2 and leaf.dimension == 2


def test_integrability_depth_bound_gives_inconclusive():
    tree = integrability_algorithm(chain_fields(), depth=1)
    leaf, = tree.leaves()
    assert leaf.verdict is NodeVerdict.INCONCLUSIVE
    assert "depth" in leaf.witness["reason"]


def test_transversality_examples(plane_chart):
    assert transversality_check(flat_mvf(plane_chart)).transverse
    vert = DecomposableMVF(plane_chart, (vf(plane_chart, y1="1"), vf(plane_chart, x2="1")))
    assert not transversality_check(vert).transverse
    scaled = DecomposableMVF(plane_chart, (vf(plane_chart, x1="x1"), vf(plane_chart, x2="1")))
    res = transversality_check(scaled)
    assert res.transverse and res.determinant == sympy.Symbol("x1")


def test_normalize_factors_keeps_distribution(plane_chart):
    Y = DecomposableMVF(plane_chart, (vf(plane_chart, x1="1", x2="1", y1="x1"), vf(plane_chart, x1="1", x2="-1", y2="1")))
    N = normalize_factors(Y)
    assert N.is_normalized()
    assert symcore.normalize(N.scale + 2) == 0


def test_normalize_rejects_vertical(plane_chart):
    vert = DecomposableMVF(plane_chart, (vf(plane_chart, y1="1"), vf(plane_chart, x2="1")))
    with pytest.raises(Exception):
        normalize_factors(vert)


@settings(deadline=None, max_examples=15)
@given(st.integers(0, 10 ** 6), st.integers(1, 3), st.integers(1, 3))
def test_bracket_antisymmetry_and_jacobi(seed, m, N):
    rng = random.Random(seed)
    chart = ChartSpec.make([f"x{i}" for i in range(m)], [f"y{i}" for i in range(N)])
    X, Y, Z = (VectorField(chart, {q: random_poly(rng, chart.coords, 2, terms=2) for q in chart.coords})
               for _ in range(3))
    assert (lie_bracket(X, Y) + lie_bracket(Y, X)).is_zero()
    jac = lie_bracket(lie_bracket(X, Y), Z) + lie_bracket(lie_bracket(Y, Z), X) + lie_bracket(lie_bracket(Z, X), Y)
    assert jac.is_zero()

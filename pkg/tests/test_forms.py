import random

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from mvfield.forms import (
    AdaptedForm,
    exterior_derivative,
    horizontal_part,
    interior,
    lie_derivative,
    pullback,
    volume,
    volume_minus,
    wedge,
)
from mvfield.geometry import ChartSpec, VectorField

from tests.helpers import random_poly

CHART = ChartSpec.make(["x0", "x1"], ["y0"], jet=True)


def random_form(rng, degree):
    import itertools
    n = len(CHART.coords)
    coeffs = {idx: random_poly(rng, CHART.coords, 2, terms=2)
              for idx in itertools.combinations(range(n), degree) if rng.random() < 0.4}
    return AdaptedForm(CHART, degree, coeffs)


def random_field(rng):
    return VectorField(CHART, {q: random_poly(rng, CHART.coords, 2, terms=2) for q in CHART.coords})


def test_index_tuples_must_increase():
    with pytest.raises(ValueError):
        AdaptedForm(CHART, 2, {(1, 0): 1})


def test_getitem_reorders_with_sign():
    w = wedge(AdaptedForm.d_coord(CHART, "x0"), AdaptedForm.d_coord(CHART, "y0"))
    assert w["x0", "y0"] == 1 and w["y0", "x0"] == -1 and w["x0", "x0"] == 0


def test_volume_minus_is_interior_of_volume():
    assert volume_minus(CHART, 0)["x1"] == 1
    assert volume_minus(CHART, 1)["x0"] == -1


def test_degree_mismatch_on_add():
    with pytest.raises(ValueError):
        AdaptedForm.zero(CHART, 1) + AdaptedForm.zero(CHART, 2)


def test_pullback_of_volume_by_section_is_volume():
    vals = {"y0": sympy.Symbol("x0"), "v0_0": 1, "v0_1": 0}
    assert (pullback(volume(CHART), vals) - volume(CHART)).is_zero()


def test_pullback_needs_all_coordinates():
    with pytest.raises(ValueError):
        pullback(AdaptedForm.d_coord(CHART, "y0"), {})


def test_horizontal_part_kills_contact_form():
    theta = AdaptedForm(CHART, 1, {(2,): 1, (0,): -CHART.v(0, 0), (1,): -CHART.v(0, 1)})
    assert horizontal_part(theta).is_zero()


@settings(deadline=None, max_examples=10)
@given(st.integers(0, 10 ** 6), st.integers(0, 3))
def test_d_squared_vanishes(seed, degree):
    a = random_form(random.Random(seed), degree)
    assert exterior_derivative(exterior_derivative(a)).is_zero()


@settings(deadline=None, max_examples=10)
@given(st.integers(0, 10 ** 6), st.integers(0, 2), st.integers(0, 2))
def test_wedge_graded_commutative(seed, p, q):
    rng = random.Random(seed)
    a, b = random_form(rng, p), random_form(rng, q)
    assert (wedge(a, b) - wedge(b, a).scaled((-1) ** (p * q))).is_zero()


@settings(deadline=None, max_examples=10)
@given(st.integers(0, 10 ** 6), st.integers(1, 2))
def test_leibniz_rule_for_d(seed, p):
    rng = random.Random(seed)
    a, b = random_form(rng, p), random_form(rng, 1)
    lhs = exterior_derivative(wedge(a, b))
    rhs = wedge(exterior_derivative(a), b) + wedge(a, exterior_derivative(b)).scaled((-1) ** p)
    assert (lhs - rhs).is_zero()


@settings(deadline=None, max_examples=10)
@given(st.integers(0, 10 ** 6), st.integers(1, 3))
def test_lie_derivative_commutes_with_d(seed, p):
    rng = random.Random(seed)
    a, X = random_form(rng, p), random_field(rng)
    assert (lie_derivative(X, exterior_derivative(a)) - exterior_derivative(lie_derivative(X, a))).is_zero()


@settings(deadline=None, max_examples=10)
@given(st.integers(0, 10 ** 6))
def test_interior_is_antiderivation(seed):
    rng = random.Random(seed)
    a, b, X = random_form(rng, 1), random_form(rng, 2), random_field(rng)
    lhs = interior(X, wedge(a, b))
    rhs = wedge(interior(X, a), b) - wedge(a, interior(X, b))
    assert (lhs - rhs).is_zero()

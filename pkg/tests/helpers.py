"""Fixtures shared by several test modules that are not pytest fixtures."""

import random

import sympy

from mvfield.geometry import ChartSpec, DecomposableMVF, VectorField


def example_fields():
    chart = ChartSpec.make(["x1", "x2"], ["y1", "y2"])
    Y1 = VectorField(chart, {
        "x1": 1,
        "y1": chart.parse("y1 - x1 - x2"),
        "y2": chart.parse("-y2 + x1 + x2"),
    })
    Y2 = VectorField(chart, {
        "x2": 1,
        "y1": chart.parse("y1^2 - x1^2 - x2^2 - 2*x1 - 2*x2 - 2*x1*x2"),
        "y2": 1,
    })
    return chart, DecomposableMVF(chart, (Y1, Y2))


def branch_b_solution(c):
    return {
        "y1": sympy.sympify("x1 + x2 + 1"),
        "y2": sympy.sympify("x1 + x2 - 1") + sympy.Rational(c) * sympy.exp(-sympy.Symbol("x1")),
    }


def random_poly(rng: random.Random, names, degree: int, terms: int = 4, coeff: int = 3):
    """Sparse integer polynomial of total degree <= degree."""
    syms = [sympy.Symbol(n) for n in names]
    out = sympy.Integer(0)
    for _ in range(terms):
        c = rng.randint(-coeff, coeff)
        if c == 0:
            continue
        mono = sympy.Integer(c)
        d = rng.randint(0, degree)
        for _ in range(d):
            mono *= rng.choice(syms)
        out += mono
    return sympy.expand(out)

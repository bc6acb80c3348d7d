"""Integrability of multivector fields on jet bundles and Euler-Lagrange field equations."""

from .symcore import ParseError, SimplifyConfig, Verdict, is_zero, parse, to_string
from .geometry import ChartSpec, DecomposableMVF, VectorField, integrability_algorithm, lie_bracket
from .lagrangian import Lagrangian

__all__ = [
    "ChartSpec",
    "DecomposableMVF",
    "Lagrangian",
    "ParseError",
    "SimplifyConfig",
    "Verdict",
    "VectorField",
    "integrability_algorithm",
    "is_zero",
    "lie_bracket",
    "parse",
    "to_string",
]

__version__ = "0.1.0"

"""Numerical laboratory for moduli of continuity, uniformly elliptic
operators, grid solvers, and dyadic quadratic-approximation audits."""

from . import campanato, fields, moduli, operators, solver
from .errors import (
    ConfigError,
    DegenerateModulusError,
    DivergentIntegralError,
    DomainError,
    EllipticLabError,
    NonDifferentiableError,
    NumericsError,
)

__version__ = "0.1.0"

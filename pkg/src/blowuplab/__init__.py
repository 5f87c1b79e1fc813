"""Test-function verification and blow-up lifespans for damped/massive wave equations.

u_tt - Lap u + mu/(1+t) u_t + nu^2/(1+t)^2 u = |u_t|^p, with special functions,
a radial finite-difference solver, psi-weighted functionals, a checker for
the inequality chain and an epsilon-sweep harness.
"""
from .errors import ConfigError, DomainError, InstabilityError, UnsupportedRegimeError
from .special import ModelParams, TestFunctionParams

__all__ = ["ConfigError", "DomainError", "InstabilityError", "UnsupportedRegimeError",
           "ModelParams", "TestFunctionParams"]
__version__ = "0.1.0"

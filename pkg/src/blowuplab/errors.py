"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class UnsupportedRegimeError(DomainError):
    """The classical Bessel construction was requested with a negative discriminant."""


class ConfigError(ValueError):
    """A configuration violates a hypothesis or a solver constraint."""


class InstabilityError(RuntimeError):
    """The discrete solution diverged without a blow-up signature; refine the grid."""

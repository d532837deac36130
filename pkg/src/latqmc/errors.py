"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 1,
numerical failures (domain violations, lost ellipticity, weight overflow)
exit with 2.
"""


class LatticeQmcError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LatticeQmcError, ValueError):
    """Bad configuration key, value, flag combination, or input file."""


class DomainError(LatticeQmcError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DimensionMismatchError(LatticeQmcError, ValueError):
    """Vectors or objects whose dimensions are required to agree do not."""


class EllipticityError(LatticeQmcError, ArithmeticError):
    """A sampled diffusion coefficient is not positive where it must be."""


class WeightOverflowError(LatticeQmcError, OverflowError):
    """A weight accumulation left the representable floating-point range."""

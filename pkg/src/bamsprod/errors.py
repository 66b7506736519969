"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so keep the hierarchy flat
and the categories disjoint.
"""


class DimensionError(ValueError):
    """Operands have incompatible shapes or dimensions."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class NumericError(ArithmeticError):
    """A NaN/Inf was detected; the operation was aborted without side effects."""


class ConfigError(ValueError):
    """An optimizer or experiment configuration violates its invariants."""

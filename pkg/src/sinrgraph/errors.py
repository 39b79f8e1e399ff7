"""Exception types shared across the package."""


class SingularityError(ArithmeticError):
    """A path-loss or interference evaluation hit a zero distance."""


class DivergenceError(ValueError):
    """A singular integral does not converge for the given exponent."""


class PartitionMismatchError(ValueError):
    """Two measures that must share a partition do not."""

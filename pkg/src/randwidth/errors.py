"""Exception types raised by the experiment harness."""


class RegimeError(ValueError):
    """Parameters fall outside the regime an experiment is defined for."""


class ResolvabilityError(ArithmeticError):
    """A Monte Carlo probability is too small to be resolved by the sample."""

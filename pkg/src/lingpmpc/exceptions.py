"""Exception types shared across the package."""


class InputContractError(ValueError):
    """An argument violates a documented precondition (shape, range, ordering)."""


class FactorizationError(RuntimeError):
    """A matrix factorization failed even after the jitter escalation ladder."""


class NumericalConsistencyError(RuntimeError):
    """A quantity that is non-negative (or zero) in exact arithmetic came out
    far enough outside tolerance to indicate a bug rather than roundoff."""


class FitError(RuntimeError):
    """Hyperparameter optimization produced no usable result from any start."""


class SubproblemError(RuntimeError):
    """The convex subproblem solver returned a non-optimal status."""

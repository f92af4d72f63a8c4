"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: input problems exit 1,
runtime divergence/non-convergence exit 2, certification failures exit 3.
"""


class DiffGameError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DiffGameError, ValueError):
    """Arguments violate a documented precondition (dimension mismatch,
    index out of range, inconsistent grids, ...)."""


class UnsupportedDomainError(InvalidInputError):
    """Operation requires a bounded box domain and got something else."""


class InvalidStepError(InvalidInputError):
    """Time step outside (0, 1/rho); the discrete discount factor would
    leave (0, 1)."""


class GridMismatchError(InvalidInputError):
    """Two grid quantities that must share a grid do not."""


class ConfigError(InvalidInputError):
    """Run configuration is malformed. ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class DivergenceError(DiffGameError, RuntimeError):
    """A trajectory produced a non-finite state. ``step`` names the first
    offending step index."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class ConvergenceError(DiffGameError, RuntimeError):
    """An iterative scheme stopped before reaching its tolerance."""


class InnerConvergenceError(ConvergenceError):
    """Value iteration hit max_inner. Carries the last sup-norm residual."""

    def __init__(self, player, iterations, residual):
        self.player = player
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"value iteration for player {player + 1} did not converge in "
            f"{iterations} iterations (last residual {residual:.3e})"
        )


class OuterConvergenceError(ConvergenceError):
    """Best-response sweep failed. Carries the partial solution so callers
    can persist diagnostics."""

    def __init__(self, message, partial=None):
        self.partial = partial
        super().__init__(message)

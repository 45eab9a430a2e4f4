"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters, grids, or method selections."""


class GridMismatchError(ConfigurationError):
    """A coarsening/refinement factor does not fit the grid."""


class DivergenceError(RuntimeError):
    """A simulated path left the finite domain.

    Carries the index of the step at which the first non-finite state
    appeared.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class DegenerateDataError(ValueError):
    """Regression input contains non-positive errors or too few levels."""

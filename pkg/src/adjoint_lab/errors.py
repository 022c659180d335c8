"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Raised when array shapes disagree."""


class SingularMatrixError(ValueError):
    """Raised when a matrix that must be invertible is (numerically) singular."""


class ConvergenceError(RuntimeError):
    """Raised when a Newton solve fails; carries the step index when known."""

    def __init__(self, message, step_index=None):
        self.step_index = step_index
        if step_index is not None:
            message = f"step {step_index}: {message}"
        super().__init__(message)


class ConfigError(ValueError):
    """Raised for invalid experiment or problem configuration."""

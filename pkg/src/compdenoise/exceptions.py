"""Exception types raised across the package."""


class ValidationError(ValueError):
    """An input violates a documented invariant (bad pmf, shape mismatch, ...)."""


class BudgetExceededError(ValueError):
    """An exact enumeration or codebook would exceed its size budget."""


class ModelMismatchError(ValueError):
    """An observation has zero likelihood under the assumed source/channel model."""


class InfeasibleError(ValueError):
    """A requested distortion or loss target cannot be met."""


class ConfigError(ValueError):
    """Malformed or out-of-range experiment configuration."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno

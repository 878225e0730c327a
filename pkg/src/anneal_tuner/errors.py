class ValidationError(ValueError):
    """Raised when an input violates an operation's preconditions."""


class RegionNotFoundError(ValidationError):
    """No J_E candidate reaches the lower strict-embedding threshold."""

    def __init__(self, message, curve):
        super().__init__(message)
        self.curve = list(curve)

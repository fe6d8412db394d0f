"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates an operation's preconditions."""


class FormatError(ValidationError):
    """Raised when a binary file has the wrong magic, version or length."""


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""

"""Exception types shared across the package."""


class UsageError(ValueError):
    """Caller violated a documented precondition (bad arguments, bad config)."""


class NumericError(RuntimeError):
    """A numerical procedure failed (divergent iteration, singular solve).

    Carries optional diagnostic payload in ``details``.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details if details is not None else {}

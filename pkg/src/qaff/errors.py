"""Exception types shared across the package."""


class QaffError(Exception):
    """Base class for all package errors."""


class ConfigError(QaffError):
    """Invalid configuration (bad grammar, bad hyperparameters, ...)."""


class DomainError(QaffError):
    """Input outside an operation's domain (e.g. underivable prefix)."""


class InterchangeError(QaffError):
    """Malformed qaff-v1 interchange data. Always fatal."""


class TrainingDiverged(QaffError):
    """Raised when training hits non-finite values.

    Carries the last finite checkpoint in `last_head`.
    """

    def __init__(self, message, last_head=None):
        super().__init__(message)
        self.last_head = last_head

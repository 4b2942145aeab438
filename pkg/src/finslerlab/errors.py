"""Exception hierarchy shared across the package."""


class FinslerError(Exception):
    """Base class for all errors raised by finslerlab."""


class DomainEvalError(FinslerError):
    """A numeric evaluation left the domain of a sub-expression.

    Carries the text of the offending sub-expression when available.
    """

    def __init__(self, message, subexpression=None):
        if subexpression is not None:
            message = f"{message} in '{subexpression}'"
        super().__init__(message)
        self.subexpression = subexpression


class AdmissibilityError(FinslerError):
    """A point or metric violates the admissibility requirements
    (non-positive Lagrangian, singular or indefinite fundamental tensor,
    Randers one-form too large, ...)."""


class ExpressionError(FinslerError):
    """Malformed expression text."""

    def __init__(self, message, text=None, position=None):
        self.text = text
        self.position = position
        if text is not None and position is not None:
            message = f"{message} (at offset {position} in '{text}')"
        super().__init__(message)


class ConfigError(FinslerError):
    """Malformed or inconsistent run configuration."""

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)

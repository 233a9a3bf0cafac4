"""Exception types shared across the package."""


class InputError(ValueError):
    """An argument violates a precondition (dimension mismatch, bad index, ...)."""


class ValidationError(ValueError):
    """A constructed object violates its invariants (negative weight, duplicate point, ...)."""


class ParseError(ValueError):
    """A file could not be parsed; carries the offending field path."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message if field is None else f"{message} (field: {field})")


class StructuralError(RuntimeError):
    """A mathematical assumption failed on this configuration (e.g. indefinite kernel matrix)."""

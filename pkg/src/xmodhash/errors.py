"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition or invariant."""


class FormatError(ValidationError):
    """A file is not a well-formed AMX1 / AMH1 / ABC1 payload."""


class NumericalError(RuntimeError):
    """A linear-algebra step failed or produced non-finite values."""


class DegenerateDataError(NumericalError):
    """The data carries no usable signal (zero kernel width, rank-0 update)."""


class EvaluationError(ValidationError):
    """Retrieval evaluation cannot produce a defined result."""

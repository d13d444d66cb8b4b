"""Exception types shared across the lab."""


class RegurgelabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RegurgelabError):
    """A configuration value violates its contract."""


class EmptyCorpusError(RegurgelabError):
    """A corpus that must contain at least one pair is empty."""


class SizeError(RegurgelabError):
    """Requested sizes exceed what the data can provide."""


class AlignmentError(RegurgelabError):
    """Hypothesis and reference corpora are not aligned."""


class DegenerateInputError(RegurgelabError):
    """Input is structurally valid but carries no usable signal."""


class EmptyInputError(RegurgelabError):
    """An input collection that must be non-empty is empty."""


class EmptyClassError(RegurgelabError):
    """A classification dataset is missing one of its classes."""


class SingularMatrixError(RegurgelabError):
    """A linear solve hit a singular (or numerically singular) matrix."""


class ShapeError(RegurgelabError):
    """Tensor shapes do not conform to an operation's shape rule."""

    def __init__(self, message: str, *shapes):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = tuple(tuple(s) for s in shapes)


class NumericError(RegurgelabError):
    """A tensor holds non-finite values."""


class GraphError(RegurgelabError):
    """A tensor does not belong to the tape it is used with."""

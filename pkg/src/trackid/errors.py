"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside an operation's domain (e.g. a Hidden box)."""


class FitError(ValueError):
    """A least-squares or statistical fit could not be computed."""


class ProjectionError(ArithmeticError):
    """A projective map hit a zero homogeneous denominator."""


class DataError(ValueError):
    """Inputs are mutually inconsistent (missing frames, mismatched coverage)."""


class SequencingError(ValueError):
    """Tracker steps were fed out of order."""


class SchemaError(ValueError):
    """A file does not follow its documented schema."""


class InfeasibleError(RuntimeError):
    """The identification problem admits no assignment.

    ``constraint`` names the violated family and ``detail`` pinpoints it.
    """

    def __init__(self, constraint: str, detail: str):
        super().__init__(f"{constraint}: {detail}")
        self.constraint = constraint
        self.detail = detail

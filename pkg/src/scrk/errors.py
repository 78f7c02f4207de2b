"""Exception hierarchy shared across the package."""


class ScrkError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(ScrkError):
    pass


class IterationFailure(ScrkError):
    """An iterative factorization failed to converge (pathological input)."""


class RankDeficient(ScrkError):
    """A full-rank hypothesis of the requested operation is violated."""


class ZeroRow(ScrkError):
    pass


class DegenerateDirection(ScrkError):
    """The projected row direction vanished; the row carries no new information."""


class AllZeroWeights(ScrkError):
    pass


class NoAdmissibleRow(ScrkError):
    """Every admissible row is degenerate under the current projector."""


class EmptyPool(ScrkError):
    """No rows survive the degeneracy filter for the scaled-residual quantile."""


class InvalidSpec(ScrkError):
    pass


class TooManyCorruptions(ScrkError):
    pass


class InvalidGeometry(ScrkError):
    pass


class CombinatorialBlowup(ScrkError):
    """Exact subset enumeration would exceed the configured subset cap."""


class InvalidQuantileBeta(ScrkError):
    """The corruption-bound hypothesis beta < q < 1 - beta is violated."""


class ParseError(ScrkError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

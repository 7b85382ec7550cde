"""Exception hierarchy shared by every gaplra module."""


class GapLRAError(Exception):
    """Base class for all errors raised by gaplra."""


class ContractViolation(GapLRAError, ValueError):
    """An argument breaks a documented precondition (shape, range, ordering)."""


class RankDeficient(GapLRAError):
    """A block of vectors is numerically rank deficient.

    ``column`` is the index of the first column that collapsed.
    """

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"column {column} is numerically dependent on earlier columns")


class OracleScale(GapLRAError):
    """Input too large for the dense desk-scale oracle."""


class IndefiniteShift(GapLRAError):
    """The shifted matrix lambda*I - XX^T is not positive definite."""


class SolverStalled(GapLRAError):
    """An iterative solver hit its iteration/epoch cap without converging."""

    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)


class ShiftOutOfRange(GapLRAError):
    """The shift estimate lies outside the window [delta/27, delta/5]."""

    def __init__(self, estimate, delta):
        self.estimate = estimate
        self.delta = delta
        super().__init__(
            f"shift gap estimate {estimate:.6g} outside [{delta / 27:.6g}, {delta / 5:.6g}]"
        )


class ShiftTuningStalled(GapLRAError):
    """Shift tuning exceeded its iteration cap; ``history`` holds (shift, estimate) pairs."""

    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)


class NoPreconditioningNeeded(GapLRAError):
    """Raised by shift tuning when the leading eigenvalue is already within 3x the gap budget.

    Carries the eigenvalue estimate so callers can fall back to plain power iteration.
    """

    def __init__(self, estimate, delta):
        self.estimate = estimate
        self.delta = delta
        super().__init__(f"leading eigenvalue estimate {estimate:.6g} < 3 * delta ({3 * delta:.6g})")


class NoUsableGap(GapLRAError):
    """No additive gap between the k-th and (p+1)-th eigenvalue could be certified."""


class DegenerateProgress(GapLRAError):
    """The adaptive driver failed to add a new independent direction."""


class MatrixFormatError(GapLRAError, ValueError):
    """Malformed matrix file; ``line`` and ``column`` are 1-based positions."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)

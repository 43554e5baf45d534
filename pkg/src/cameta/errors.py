"""Exception hierarchy shared by every cameta module."""


class CametaError(Exception):
    pass


class InvalidParams(CametaError, ValueError):
    pass


class GenerationFailed(CametaError, RuntimeError):
    pass


class OutOfBounds(CametaError, IndexError):
    pass


class OccupiedCell(CametaError, ValueError):
    pass


class OccupiedGoal(OccupiedCell):
    pass


class ParseError(CametaError, ValueError):
    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class NoPath(CametaError):
    pass


class Timeout(CametaError):
    """Some agents did not finish within the step budget.

    ``stuck`` lists the unfinished agent ids; ``trace`` holds the partial
    execution when one is available.
    """

    def __init__(self, message, stuck=(), trace=None):
        super().__init__(message)
        self.stuck = list(stuck)
        self.trace = trace


class IncompleteTrace(CametaError, ValueError):
    pass


class Unsolvable(CametaError):
    pass


class BudgetExceeded(CametaError):
    pass


class InvalidTileSize(CametaError, ValueError):
    pass


class IdOverflow(CametaError, ValueError):
    pass


class UnmappedCell(CametaError, KeyError):
    pass


class ShapeMismatch(CametaError, ValueError):
    pass


class NaNDetected(CametaError, FloatingPointError):
    pass


class MissingLabels(CametaError, ValueError):
    pass


class ZeroLabel(CametaError, ValueError):
    pass


class LengthMismatch(CametaError, ValueError):
    pass


class NoValidPath(CametaError):
    """No candidate meets every time constraint.

    ``best_invalid`` is the index of the cheapest (invalid) candidate.
    """

    def __init__(self, message, best_invalid):
        super().__init__(message)
        self.best_invalid = best_invalid

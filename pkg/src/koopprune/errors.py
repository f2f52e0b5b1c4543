"""Exception hierarchy shared by all modules."""


class KoopPruneError(Exception):
    """Base class for library errors."""


class InvalidInputError(KoopPruneError, ValueError):
    pass


class PreconditionError(KoopPruneError, ValueError):
    pass


class RankDeficiencyError(KoopPruneError):
    """A basis or factor lost numerical column rank.

    ``column`` is the index of the first deficient column when known.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ConvergenceError(KoopPruneError):
    """A secular root did not converge; ``interval`` is the bracketing pole pair."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class EvaluationError(KoopPruneError):
    pass


class NumericalAsymmetryError(KoopPruneError):
    pass


class NumericalDriftError(KoopPruneError):
    pass


class DegenerateInputError(KoopPruneError):
    pass


class PruningError(KoopPruneError):
    """Pruning aborted; ``report`` holds the iterations completed so far."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report

"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class ContractViolation(RuntimeError):
    """A runtime contract of the asynchrony model was broken."""


class SolverFailure(RuntimeError):
    """An iterative solver hit its iteration cap.

    The best iterate found so far is kept in ``best`` so callers can
    inspect or reuse it.
    """

    def __init__(self, message, best=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.iterations = iterations

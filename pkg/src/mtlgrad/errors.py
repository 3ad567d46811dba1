"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Arguments violate an operation's preconditions."""


class NumericalDegeneracyError(ArithmeticError):
    """A solver input is numerically unusable (e.g. an indefinite Gram matrix)."""


class DomainError(ArithmeticError):
    """Expression evaluation left the domain of a function.

    ``node`` is the offending AST node when known, ``task`` the 1-based task
    index when raised from a multi-task problem.
    """

    def __init__(self, message, node=None, task=None):
        super().__init__(message)
        self.node = node
        self.task = task

    def __str__(self):
        msg = super().__str__()
        if self.task is not None:
            msg = f"task {self.task}: {msg}"
        return msg

"""Exception hierarchy.

Two families: ``InvalidParams`` for bad user input (CLI exit code 1) and
``NumericError`` for failures during a computation (CLI exit code 2).
"""


class InvalidParams(ValueError):
    """One or more model-parameter constraints are violated.

    ``violations`` lists every individual violation found, so a single
    raise can report all of them at once.
    """

    def __init__(self, message="", violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else [self]

    def __str__(self):
        if len(self.violations) > 1 or self.violations[0] is not self:
            return "; ".join(
                f"{type(v).__name__}: {v.args[0] if v.args else ''}" for v in self.violations
            )
        return super().__str__()


class NonStochasticRow(InvalidParams):
    pass


class ReducibleMatrix(InvalidParams):
    pass


class PositiveGamma(InvalidParams):
    pass


class BadDimension(InvalidParams):
    pass


class InvalidConfig(InvalidParams):
    """A sample configuration, simplex point or direction is malformed."""


class NumericError(RuntimeError):
    pass


class SingularSystem(NumericError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DimensionTooLarge(NumericError):
    pass


class NonConvergedTruncation(NumericError):
    pass


class OutOfTable(NumericError, KeyError):
    def __str__(self):
        return RuntimeError.__str__(self)


class PiOutOfRange(NumericError):
    pass


class BoundaryPoint(NumericError):
    pass


class NonFiniteState(NumericError):
    pass


class EmptyEnsemble(NumericError):
    pass


class TooCloseToBoundary(NumericError):
    pass


class SingularCovariance(NumericError):
    pass


class ModeOnBoundary(NumericError):
    pass


class NonPositiveAlpha(NumericError, ValueError):
    pass


class InfeasibleN(NumericError):
    pass


class MaxStepsExceeded(NumericError):
    pass

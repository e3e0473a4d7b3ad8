"""Exception types shared across robustkit."""


class RobustkitError(Exception):
    """Base class for all toolkit errors."""


class EmptyInputError(RobustkitError, ValueError):
    pass


class DimensionMismatchError(RobustkitError, ValueError):
    pass


class NonFiniteError(RobustkitError, ValueError):
    pass


class TooManyPointsError(RobustkitError, ValueError):
    pass


class NonUnitNormError(RobustkitError, ValueError):
    pass


class InvalidDomainError(RobustkitError, ValueError):
    pass


class ParamOutOfDomainError(RobustkitError, ValueError):
    pass


class ImageTooSmallError(RobustkitError, ValueError):
    pass


class CodecFailureError(RobustkitError, RuntimeError):
    pass


class ParseError(RobustkitError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingKeyError(RobustkitError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ZeroVarianceError(RobustkitError, ValueError):
    pass


class TooFewPairsError(RobustkitError, ValueError):
    pass


class GradientDegenerateError(RobustkitError, ArithmeticError):
    pass


class DegenerateFitWarning(UserWarning):
    """All regressors were equal; the fit fell back to a constant model."""

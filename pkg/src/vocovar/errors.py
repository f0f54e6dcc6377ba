"""Exception types shared across the package.

Each error carries an ``exit_code`` used by the command line front end.
"""


class VocovarError(Exception):
    exit_code = 1


class ParseError(VocovarError):
    exit_code = 3


class ValidationError(VocovarError):
    exit_code = 3


class UnknownVariable(VocovarError, KeyError):
    exit_code = 3

    def __str__(self):
        return Exception.__str__(self)


class DegenerateScenario(VocovarError):
    exit_code = 3


class NumericalError(VocovarError):
    exit_code = 4


class CheiralityViolation(NumericalError):
    pass


class InvalidInverseDepth(NumericalError, ValueError):
    pass


class NotPositiveDefinite(NumericalError):
    def __init__(self, msg, pivot=None):
        super().__init__(msg)
        self.pivot = pivot


class SingularSystem(NumericalError):
    pass


class DimensionTooLarge(NumericalError):
    pass

"""Exception hierarchy shared by every module."""


class MechanismError(Exception):
    """Base class for all package errors."""


class NoBracket(MechanismError):
    pass


class MaxIterExceeded(MechanismError):
    pass


class OutOfDomain(MechanismError, ValueError):
    pass


class Singular(MechanismError):
    pass


class DegenerateRegion(MechanismError):
    pass


class TooFewPoints(MechanismError, ValueError):
    pass


class NoSolution(MechanismError):
    """The boundary equation has no root inside (0, 1)."""


class BracketFailure(MechanismError):
    pass


class QuadratureFailure(MechanismError):
    pass


class AlreadyConcave(MechanismError):
    """Raised by ``convexify`` when there is nothing to convexify."""


class Unsaturated(MechanismError):
    pass


class CertificateFailed(MechanismError):
    def __init__(self, condition, report=None):
        super().__init__(condition)
        self.condition = condition
        self.report = report


class SpecParseError(MechanismError, ValueError):
    pass

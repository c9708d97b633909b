"""Exception and warning types raised by the solver stack."""


class SDGError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(SDGError, ValueError):
    pass


class UnsupportedDegree(SDGError, ValueError):
    pass


class PointOutsideDomain(SDGError, ValueError):
    pass


class InvalidEvaluation(SDGError, ValueError):
    pass


class InvalidGeometry(SDGError, ValueError):
    pass


class AssemblyFailure(SDGError, ArithmeticError):
    """A macro-element mass block could not be inverted."""


class PostprocessFailure(SDGError, ArithmeticError):
    """A macro-local postprocessing system is singular."""


class SingularSystem(SDGError, ArithmeticError):
    pass


class SolveDiverged(SDGError, ArithmeticError):
    pass


class MarkerEscaped(SDGError):
    """A Lagrangian marker left the closed unit square."""


class PicardNotConverged(UserWarning):
    pass

"""Exceptions raised by the hbcs pipeline"""


class HBCSError(Exception):
    """Base class for all hbcs errors"""


class StructuralError(HBCSError):
    """Malformed system data (dimensions, shapes, types)"""


class SystemFileError(StructuralError):
    """A system-definition file could not be parsed"""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{message} (key: {key})"
        super().__init__(message)


class DomainError(HBCSError):
    """Evaluation outside the spatial interval"""


class ParameterError(HBCSError):
    """Invalid user-supplied parameter"""


class NumericalError(HBCSError):
    """Numerical linear algebra broke down"""


class SingularMatrixError(NumericalError):
    """A matrix that must be inverted is singular at tolerance"""


class ResolventError(NumericalError):
    """s is outside the usable resolvent region"""


class HyperbolicityError(NumericalError):
    """P1 H is not uniformly hyperbolic on the grid"""


class CertificateError(HBCSError):
    """A decay certificate was demanded but none holds"""

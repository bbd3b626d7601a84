"""Exception hierarchy shared by all modules."""


class HeatBEMError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(HeatBEMError, ValueError):
    pass


class DomainError(HeatBEMError, ValueError):
    """Evaluation requested outside the domain where a quantity is defined."""


class ParseError(HeatBEMError):
    pass


class MeshError(HeatBEMError):
    pass


class OpenSurfaceError(MeshError):
    pass


class OrientationError(MeshError):
    pass


class DegenerateTriangleError(MeshError):
    pass


class NumericError(HeatBEMError, ArithmeticError):
    pass


class SingularBlockError(NumericError):
    def __init__(self, message, block=None, rcond=None):
        super().__init__(message)
        self.block = block
        self.rcond = rcond


class DimensionMismatchError(HeatBEMError, ValueError):
    pass

"""Exception hierarchy shared by all modules."""


class MicropolarError(Exception):
    """Base class for every error raised by this package."""


# geometry
class GeometryError(MicropolarError):
    pass


class OverlapError(GeometryError):
    pass


class ContainmentError(GeometryError):
    pass


class DegenerateRegion(GeometryError):
    pass


class UnknownRegion(GeometryError):
    pass


# motion
class MotionError(MicropolarError):
    pass


class OutOfRange(MotionError):
    pass


class NonInvertible(MotionError):
    pass


class StepTooLarge(MotionError):
    pass


# discretization
class SizeError(MicropolarError):
    pass


class QuadratureOrderError(MicropolarError):
    pass


class SingularStep(MicropolarError):
    pass


class GridMismatch(MicropolarError):
    pass


# solvers
class NoConvergence(MicropolarError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class IndefiniteOperator(MicropolarError):
    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class MaxIterations(MicropolarError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class PowerIterationStall(MicropolarError):
    pass


class ConfigError(MicropolarError):
    pass

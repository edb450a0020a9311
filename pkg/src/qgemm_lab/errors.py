class QGemmLabError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(QGemmLabError, ValueError):
    pass


class RangeError(QGemmLabError, ValueError):
    pass


class PermError(QGemmLabError, ValueError):
    pass


class FormatError(QGemmLabError, ValueError):
    pass


class SimulationError(QGemmLabError):
    pass


class OutOfBounds(SimulationError, IndexError):
    pass


class Misaligned(SimulationError):
    pass


class BarrierDivergence(SimulationError):
    pass


class SharedOverflow(SimulationError):
    pass

"""Exception hierarchy shared by all permahom modules."""


class PermahomError(Exception):
    """Base class for all errors raised by this package."""


# geometry
class GeometryError(PermahomError):
    pass


class InvalidShape(GeometryError):
    pass


class ObstacleTouchesBoundary(GeometryError):
    pass


class DisconnectedFluid(GeometryError):
    pass


class NonIntegerTiling(GeometryError):
    pass


# solvers
class SolverError(PermahomError):
    pass


class NotConverged(SolverError):
    """Iteration caps were exhausted before the residual targets were met."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class EmptyObstacle(SolverError):
    pass


class GridTooLarge(SolverError):
    pass


# permeability / post-processing
class MaskMismatch(PermahomError):
    pass


class SPDViolation(PermahomError):
    pass


class InconsistentRuns(PermahomError):
    pass


class GridMismatch(PermahomError):
    pass


# unfolding
class OnCellBoundary(PermahomError):
    pass


class MisalignedGrid(PermahomError):
    pass


# configuration
class ConfigError(PermahomError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(ConfigError):
    def __init__(self, message, key=None):
        if key and key not in message:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key

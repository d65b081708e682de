"""Exception hierarchy shared by all subpackages."""


class EgfemError(Exception):
    """Base class for all errors raised by :mod:`egfem_mor`."""


# mesh / file input
class UnsupportedFormat(EgfemError):
    pass


class MalformedFile(EgfemError):
    pass


class InvalidParameter(EgfemError, ValueError):
    pass


class MeshMismatch(EgfemError):
    pass


class GradientUndefined(EgfemError):
    """Raised when a gradient-dependent nonlinearity is interpolated onto a
    continuous space, whose nodes sit on gradient discontinuities."""


# algebra
class DimensionMismatch(EgfemError, ValueError):
    pass


class ShapeMismatch(EgfemError, ValueError):
    pass


class PatternMismatch(EgfemError, ValueError):
    pass


class NonFiniteValue(EgfemError, FloatingPointError):
    pass


# reduction
class RankExceedsData(EgfemError, ValueError):
    pass


class SingularSelection(EgfemError):
    pass


class MissingDeim(EgfemError):
    pass


# solvers
class NoConvergence(EgfemError):
    pass


class SingularJacobian(EgfemError):
    pass


class SingularMatrix(EgfemError):
    pass


class StepFailure(EgfemError):
    pass


# driver
class SchemaViolation(EgfemError):
    def __init__(self, key_path, message):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class MissingPrerequisite(EgfemError):
    pass

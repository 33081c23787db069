"""Exception types raised across the package."""


class GeomEvalError(Exception):
    pass


class InvalidTransform(GeomEvalError, ValueError):
    pass


class IoFailure(GeomEvalError, OSError):
    pass


# geometry file parsing
class MalformedHeader(GeomEvalError, ValueError):
    pass


class TruncatedBody(GeomEvalError, ValueError):
    pass


class NonFiniteValue(GeomEvalError, ValueError):
    def __init__(self, message, record_index=None):
        super().__init__(message)
        self.record_index = record_index


class MalformedFace(GeomEvalError, ValueError):
    pass


class MalformedRecord(GeomEvalError, ValueError):
    pass


class SchemaViolation(GeomEvalError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InvalidPose(GeomEvalError, ValueError):
    pass


# geometry / metrics
class EmptyCloud(GeomEvalError, ValueError):
    def __init__(self, message="point cloud is empty", side=None):
        super().__init__(message)
        self.side = side


class EmptyMesh(GeomEvalError, ValueError):
    pass


class NoArea(GeomEvalError, ValueError):
    pass


class TooFewPairs(GeomEvalError, ValueError):
    pass


class DegenerateConfiguration(GeomEvalError, ValueError):
    pass


class LengthMismatch(GeomEvalError, ValueError):
    pass


# reporting
class SceneSetMismatch(GeomEvalError, ValueError):
    pass


class ToleranceMismatch(GeomEvalError, ValueError):
    pass

"""Exception hierarchy shared by all meshres modules."""


class MeshresError(Exception):
    """Base class for every error raised by meshres."""


class DataError(MeshresError):
    """Problem with input data (files, labels, shapes). CLI exit code 2."""


class ParseError(DataError):
    pass


class ValidationError(DataError):
    pass


class DegenerateFaceError(ValidationError):
    pass


class IsolatedVertexError(ValidationError):
    pass


class EmptyResultError(DataError):
    pass


class ThirdMolarError(DataError):
    pass


class UnknownLabelError(DataError):
    pass


class TargetUnreachableError(MeshresError):
    pass


class ShapeError(DataError):
    pass


class ConfigError(DataError):
    pass


class InsufficientSourceError(DataError):
    pass


class LengthMismatchError(DataError):
    pass


class RangeError(DataError):
    pass


class DatasetTooSmallError(DataError):
    pass

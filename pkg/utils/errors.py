class SmartPgError(Exception):
    """Base class for every error raised by the toolkit"""


class CaseError(SmartPgError, ValueError):
    """A grid case could not be read or is not a valid network"""


class SchemaError(CaseError):
    """A field is missing, has the wrong type, or a literal is malformed"""


class InvariantError(CaseError):
    """The case parsed but breaks a network invariant"""


class UnsupportedFormatError(CaseError):
    """The input uses a feature this toolkit does not read"""


class ModelFormatError(SmartPgError, ValueError):
    """A saved model or warm-start document is unreadable"""


class VersionError(ModelFormatError):
    """A saved model was written by an incompatible format version"""


class DimensionError(ModelFormatError):
    """Vector or model dimensions do not match the case"""


class DatasetError(SmartPgError, ValueError):
    """A scenario dataset is inconsistent or unreadable"""


class NumericalFailure(SmartPgError, ArithmeticError):
    """A numerical kernel produced a singular system or non-finite values"""


class ConfigError(SmartPgError, ValueError):
    """Options or a run configuration hold an invalid value"""

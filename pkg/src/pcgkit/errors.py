"""Exception hierarchy.

``DataError`` subclasses describe problems with inputs (files, recordings,
feature tables). The CLI maps them to exit code 2; ``InvariantViolation``
maps to exit code 3.
"""


class PCGError(Exception):
    """Base class for all pcgkit errors."""


class DataError(PCGError, ValueError):
    """Input data cannot be processed."""


class InvariantViolation(PCGError):
    """An internal consistency check failed."""


# signal io
class MalformedWav(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class RateTooLow(DataError):
    pass


class DegenerateSignal(DataError):
    pass


# dsp
class SignalTooShort(DataError):
    pass


class BadBand(DataError):
    pass


class TooShort(DataError):
    pass


class EmptyInterval(DataError):
    pass


# segmentation
class NoPeriodicity(DataError):
    pass


class TooFewPeaks(DataError):
    pass


class NoCrossing(DataError):
    pass


# features
class CycleTooShort(DataError):
    pass


class LayoutMismatch(DataError):
    pass


# classifiers
class EmptyTrainSet(DataError):
    pass


class SingleClassTrainSet(DataError):
    pass


class InsufficientClassData(DataError):
    pass


class EmptyValidationSet(DataError):
    pass


class NonConvergence(PCGError):
    pass


class DivergentLoss(PCGError):
    pass


class SchemaVersionMismatch(DataError):
    pass


# evaluation / corpus
class ClassTooSmall(DataError):
    pass


class ManifestMismatch(DataError):
    pass


class InvalidParams(DataError):
    pass


class ConfigError(DataError):
    pass

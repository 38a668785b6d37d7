"""Exception hierarchy. Every error carries a short machine-readable ``code``."""

class VocalExprError(Exception):
    code = "Error"


# audio / features

class NotWavError(VocalExprError, ValueError):
    code = "NotWav"


class UnsupportedEncodingError(VocalExprError, ValueError):
    code = "UnsupportedEncoding"


class TruncatedFileError(VocalExprError, ValueError):
    code = "TruncatedFile"


class AudioTooShortError(VocalExprError, ValueError):
    code = "AudioTooShort"


class BadFilterbankError(VocalExprError, ValueError):
    code = "BadFilterbank"


class FrameCountMismatchError(VocalExprError, ValueError):
    code = "FrameCountMismatch"


class WrongKindError(VocalExprError, ValueError):
    code = "WrongKind"


class TooFewFramesError(VocalExprError, ValueError):
    code = "TooFewFrames"


class BadFeatureFileError(VocalExprError, ValueError):
    code = "BadFeatureFile"


# neural core / models

class EmptyDatasetError(VocalExprError, ValueError):
    code = "EmptyDataset"


class ShapeMismatchError(VocalExprError, ValueError):
    code = "ShapeMismatch"


class WrongModelKindError(VocalExprError, ValueError):
    code = "WrongModelKind"


class TooFewQueriesError(VocalExprError, ValueError):
    code = "TooFewQueries"


class DimMismatchError(VocalExprError, ValueError):
    code = "DimMismatch"


class EmptySequenceError(VocalExprError, ValueError):
    code = "EmptySequence"


class BadCheckpointError(VocalExprError, ValueError):
    code = "BadCheckpoint"


class SourceListMismatchError(VocalExprError, ValueError):
    code = "SourceListMismatch"


class EmptyVocabularyError(VocalExprError, ValueError):
    code = "EmptyVocabulary"


# data pipeline

class BadVoteCountError(VocalExprError, ValueError):
    code = "BadVoteCount"


class BadVoteValueError(VocalExprError, ValueError):
    code = "BadVoteValue"


class InsufficientDataError(VocalExprError, ValueError):
    code = "InsufficientData"


class BadManifestError(VocalExprError, ValueError):
    code = "BadManifest"


# metrics

class OneClassOnlyError(VocalExprError, ValueError):
    code = "OneClassOnly"


class LengthMismatchError(VocalExprError, ValueError):
    code = "LengthMismatch"


class TooShortError(VocalExprError, ValueError):
    code = "TooShort"


class DegenerateVarianceError(VocalExprError, ValueError):
    code = "DegenerateVariance"


# cli

class BadConfigError(VocalExprError, ValueError):
    code = "BadConfig"


class NumericalDivergenceError(VocalExprError, ArithmeticError):
    code = "NumericalDivergence"

"""Exception hierarchy.

Every error raised on purpose by the toolkit derives from :class:`SerError`.
The three intermediate classes map onto CLI exit codes (config 1, data 2,
numeric 3).
"""


class SerError(Exception):
    pass


class ConfigError(SerError, ValueError):
    pass


class DataError(SerError, ValueError):
    pass


class NumericError(SerError, ArithmeticError):
    pass


# audio_io
class MalformedWav(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class EmptyAudio(DataError):
    pass


class UnrecognizedFilename(DataError):
    pass


class NoFilesFound(DataError):
    pass


# dsp
class BadFrameParams(DataError):
    pass


class BadBankParams(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateSignal(DataError):
    pass


class TooFewFrames(DataError):
    pass


# features
class InsufficientClasses(DataError):
    pass


class BadK(DataError):
    pass


# nn
class BadRate(ConfigError):
    pass


class BadCheckpoint(DataError):
    pass


# train_eval
class InsufficientClassSamples(DataError):
    pass


class EmptyTestSet(DataError):
    pass


class NonFiniteLoss(NumericError):
    pass

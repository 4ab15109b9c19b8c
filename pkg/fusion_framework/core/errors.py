"""Exception hierarchy shared by every fusion module."""


class FusionError(Exception):
    """Base class for all fusion platform errors."""


class InputError(FusionError):
    """Bad input data or configuration; the CLI exits with code 1."""


class ConfigError(InputError, ValueError):
    pass


class NoInputStreamsError(InputError):
    def __init__(self, data_dir=None):
        self.data_dir = data_dir
        super().__init__("no input streams")


class PipelineStageError(FusionError):
    """A pipeline stage failed; the CLI exits with code 2."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


# topic_bus


class DuplicateTopicError(FusionError, ValueError):
    pass


class EmptyTopicNameError(FusionError, ValueError):
    pass


class UnknownTopicError(FusionError, KeyError):
    pass


class SchemaMismatchError(FusionError, TypeError):
    pass


# ingest / storage


class UnsortedInputError(FusionError, ValueError):
    pass


class MixedDeviceError(FusionError, ValueError):
    pass


class NonPositiveInputError(FusionError, ValueError):
    pass


class UnknownDeviceError(FusionError, KeyError):
    pass


class MalformedRecordError(InputError, ValueError):
    pass


class UnknownKindError(FusionError, KeyError):
    pass


# timesync


class NonMonotonicTimestampsError(FusionError, ValueError):
    pass


class InvalidClockModelError(FusionError, ValueError):
    pass


class EmptyModelListError(FusionError, ValueError):
    pass


class ClockSkewError(FusionError):
    """Devices disagree by more than the fusion tolerance."""


# hrv_engine


class TooFewSamplesError(FusionError, ValueError):
    pass


class TooShortRecordError(FusionError, ValueError):
    pass


class ZeroDenominatorError(FusionError, ZeroDivisionError):
    pass


class EmptyInputError(FusionError, ValueError):
    pass


# geo_fusion


class OutOfRangeCoordinateError(FusionError, ValueError):
    pass


class UnsortedFixesError(UnsortedInputError):
    pass


# activity_segment


class MissingSubjectCoverageError(FusionError, ValueError):
    pass


class FewerThanTwoSubjectsError(FusionError, ValueError):
    pass


class InsufficientCoverageError(FusionError, ValueError):
    pass


# scenarios


class InvalidScenarioError(InputError, ValueError):
    pass

"""Exception hierarchy shared across the package."""


class SvoDriveError(Exception):
    """Base class for all package errors."""


# ingest / geometry
class MalformedRow(SvoDriveError):
    pass


class MissingColumn(SvoDriveError):
    pass


class DegeneratePath(SvoDriveError):
    pass


class NoInteraction(SvoDriveError):
    pass


class InvalidThreshold(SvoDriveError):
    pass


class NoPairsFound(SvoDriveError):
    pass


class InvalidSpec(SvoDriveError):
    pass


class ScenarioFormatError(SvoDriveError):
    pass


# svo
class NegativeVelocity(SvoDriveError):
    pass


class PhiOutOfRange(SvoDriveError):
    pass


# environment
class InvalidScenario(SvoDriveError):
    pass


class ActionOutOfBounds(SvoDriveError):
    pass


# rewards
class LengthOutOfRange(SvoDriveError):
    pass


class EmptyEpisode(SvoDriveError):
    pass


# neural core
class DimensionMismatch(SvoDriveError):
    pass


class StaleCache(SvoDriveError):
    pass


class ShapeMismatch(SvoDriveError):
    pass


class CheckpointError(SvoDriveError):
    pass


# agent / evaluation
class BufferUnderfilled(SvoDriveError):
    pass


class ConfigInvalid(SvoDriveError):
    pass


class EmptyDataset(SvoDriveError):
    pass


class NoScenarios(SvoDriveError):
    pass


class NoCompletedEpisodes(SvoDriveError):
    pass


class EmptyLog(SvoDriveError):
    pass

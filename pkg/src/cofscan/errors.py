"""Exception types shared across the engine."""


class CofscanError(Exception):
    """Base class for all engine errors."""


class MalformedRuns(CofscanError):
    """Run-length data does not describe a bitmap of the declared size."""


class EmptyMask(CofscanError):
    """Operation requires at least one set pixel."""


class DimensionMismatch(CofscanError):
    """Mask or image dimensions disagree."""


class UnknownImage(CofscanError):
    """Image id not present in the annotation store or run."""


class MissingGroundTruth(CofscanError):
    """A ground-truth filter was requested but the log carries no labels."""


class FlipsOnlyLog(CofscanError):
    """Per-image and conditional tables need the full evaluation log."""


class EmptyDataset(CofscanError):
    """Dataset directory contains no readable images."""


class InvalidLabel(CofscanError):
    """Source label outside the supported class range."""


class TemplateTooLarge(CofscanError):
    """Watermark template does not fit the image at every anchor."""


class ConfigError(CofscanError):
    """Run configuration is malformed or inconsistent."""


class ToolError(CofscanError):
    """External tool call failed.

    ``kind`` is one of: timeout, crashed, malformed, remote-error,
    nondeterministic, unavailable.
    """

    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


class SpawnFailed(CofscanError):
    """Tool process could not be started."""


class HandshakeTimeout(CofscanError):
    """Tool did not answer the hello request in time."""


class ProtocolViolation(CofscanError):
    """Tool wrote bytes that do not parse as a protocol response."""


class SegmentationFailed(CofscanError):
    """Segmentation stage failed for one image."""


class EditFailed(CofscanError):
    """Edit stage failed for one candidate."""


class ClassificationFailed(CofscanError):
    """Classification stage failed for one candidate."""

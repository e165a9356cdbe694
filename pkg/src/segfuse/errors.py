"""Exception hierarchy shared across the toolkit.

Every error raised on purpose derives from :class:`SegfuseError`, so callers
(and the CLI) can distinguish validation failures from genuine bugs.
"""


class SegfuseError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(SegfuseError):
    """Two arrays that must be congruent have different shapes."""


class LengthMismatch(SegfuseError):
    """RLE counts are inconsistent with the declared mask size."""


class DegeneratePolygon(SegfuseError):
    """Polygon has fewer than 3 points or malformed coordinates."""


class EmptyPatch(SegfuseError):
    """An instance patch is empty before or after a transform."""


class ParseError(SegfuseError):
    """A JSON input file could not be parsed."""


class ValidationError(SegfuseError):
    """Structurally parseable input violates a dataset invariant."""


class EmptyDataset(SegfuseError):
    """The operation needs at least one annotation."""


class MissingImagery(SegfuseError):
    """Pixel data required for an image is absent or mismatched."""


class EmptyBank(SegfuseError):
    """Copy-paste was asked to sample from an empty instance bank."""


class ConfigError(SegfuseError):
    """A configuration value is outside its allowed range."""


class EpochOutOfRange(SegfuseError):
    """Epoch index is outside [0, total_epochs)."""


class NoModels(SegfuseError):
    """Fusion needs at least one model output."""


class WeightMismatch(SegfuseError):
    """Model weights are missing, non-positive, or miscounted."""


class MaskSizeMismatch(SegfuseError):
    """Detection masks within one image do not share a common size."""


class StageCountMismatch(SegfuseError):
    """Pyramid stage count does not match the stage function list."""


class ChannelMismatch(SegfuseError):
    """Feature maps being summed have different channel counts."""


class DimensionMismatch(SegfuseError):
    """Logits and class counts have different lengths."""


class EmptyList(SegfuseError):
    """An aggregate operation received no inputs."""


class NoGroundTruth(SegfuseError):
    """A category has no ground-truth instances to evaluate against."""

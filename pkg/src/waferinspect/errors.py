"""Exception types raised across the package.

Everything derives from WaferInspectError so the CLI can map any
domain failure to a single exit code while keeping the class name
(and therefore the failing stage) in the message.
"""


class WaferInspectError(Exception):
    """Base class for all domain errors."""


# synthetic wafer generation
class InvalidLayout(WaferInspectError):
    pass


class DefectOutOfGrid(WaferInspectError):
    pass


class BadMix(WaferInspectError):
    pass


class IoFailure(WaferInspectError):
    pass


# image processing
class EmptyInput(WaferInspectError):
    pass


class DegenerateContour(WaferInspectError):
    pass


class NoContour(WaferInspectError):
    pass


# localization / pipeline
class LayoutMismatch(WaferInspectError):
    pass


class UntrainedModel(WaferInspectError):
    pass


class MissingAdjacency(WaferInspectError):
    pass


# numerics / training
class ShapeMismatch(WaferInspectError):
    pass


class EmptyClass(WaferInspectError):
    pass


class DivergenceDetected(WaferInspectError):
    pass


class NonConvergence(WaferInspectError):
    pass


# evaluation
class LengthMismatch(WaferInspectError):
    pass


class TooFew(WaferInspectError):
    pass


class EmptyVerdict(WaferInspectError):
    pass


class StageFailure(WaferInspectError):
    """A pipeline stage failed; the message names the stage."""


class InvalidConfig(WaferInspectError):
    """A configuration file is missing, malformed, or out of range."""

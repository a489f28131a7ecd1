"""Exception hierarchy shared across the toolkit.

Three coarse families map onto CLI exit codes: ``InputParseError`` for
malformed files or configs (exit 2), ``ValidationError`` subclasses for
domain-rule violations (exit 3), and ``InternalError`` for broken internal
invariants (exit 4).
"""

from __future__ import annotations


class YumeKitError(Exception):
    """Base class for every error raised by this package."""


class InputParseError(YumeKitError):
    """A file or config could not be parsed into the expected structure."""


class InternalError(YumeKitError):
    """An internal invariant failed; indicates a bug, not bad input."""


class ValidationError(YumeKitError, ValueError):
    """Input parsed fine but violates a documented precondition."""


# -- rigid transforms ---------------------------------------------------------

class BadBottomRow(ValidationError):
    """Homogeneous 4x4 bottom row is not exactly [0, 0, 0, 1]."""


class NotRigid(ValidationError):
    """Rotation block is not orthonormal with determinant +1 within tolerance."""


# -- trajectories -------------------------------------------------------------

class TooFewPoses(ValidationError):
    """Trajectory has fewer poses than the operation needs."""


class EmptyMotionSet(ValidationError):
    """Canonical motion set contains no motions."""


class UnknownMotionName(ValidationError):
    """A motion name has no entry in the motion set or vocabulary."""


class EmptyStats(ValidationError):
    """Speed statistics lack the entries the operation needs."""


# -- flows and losses ---------------------------------------------------------

class TOutOfRange(ValidationError):
    """Interpolation time is outside [0, 1]."""


class DegenerateTime(ValidationError):
    """Conditioning time is outside the [0, 1] band where it is defined."""


class DimensionMismatch(ValidationError):
    """Array arguments have incompatible shapes."""


class EmptyInput(ValidationError):
    """An aggregate was requested over zero elements."""


# -- samplers -----------------------------------------------------------------

class EmptySchedule(ValidationError):
    """Time schedule has no steps."""


class ZeroTime(ValidationError):
    """A stochastic step was requested at t = 0 where the drift divides by t."""


class InvalidTravelParams(ValidationError):
    """Travel interval or depth below 1."""


class BadRefineSteps(ValidationError):
    """Refinement step count negative or not smaller than the schedule."""


class OperatorShapeMismatch(ValidationError):
    """Low-pass operator and latent disagree on trailing dimensions."""


# -- frequency operator -------------------------------------------------------

class BadKernel(ValidationError):
    """Kernel is not a finite, odd-length 1-D tap vector shorter than the grid."""


class BadDims(ValidationError):
    """Grid dimensions too small to build the operator."""


class ShapeMismatch(ValidationError):
    """Array does not match the shape an operator or op was built for."""


# -- context planning ---------------------------------------------------------

class IndivisibleDims(ValidationError):
    """A compression ratio exceeds the latent dimension it divides."""


# -- masking and caching ------------------------------------------------------

class BadRatio(ValidationError):
    """Masking ratio outside [0, 1)."""


class BadDepth(ValidationError):
    """Encoder depth outside [0, number of blocks)."""


class BadK(ValidationError):
    """Selection count outside [0, number of blocks]."""


class TooFewTimesteps(ValidationError):
    """No input sequence spans a full cache segment."""

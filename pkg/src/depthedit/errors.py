"""Exception hierarchy shared across the package.

Every error raised by depthedit derives from :class:`DepthEditError` so
callers can catch the whole family at an API boundary.
"""


class DepthEditError(Exception):
    """Base class for all depthedit errors."""


class InvalidInputError(DepthEditError):
    """An argument violates a documented precondition."""


class BehindCameraError(InvalidInputError):
    """A 3D point with z <= 0 was handed to the projection."""


class EmptySelectionError(InvalidInputError):
    """The selection mask contains no usable pixels."""


class DegenerateInputError(InvalidInputError):
    """Input leaves the operation with nothing to work on (e.g. hole covers the whole image)."""


class InvalidConfigError(InvalidInputError):
    """A configuration value is outside its allowed range."""


class EditOutOfFrameError(DepthEditError):
    """The requested transform moved the selection entirely out of view."""


class SolverFailureError(DepthEditError):
    """Iterative solver failed to converge; carries the final residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InsufficientCorrespondencesError(DepthEditError):
    """Too few correspondence pairs survive confidence filtering."""


class SolverDivergedError(SolverFailureError):
    """Optimization produced a non-finite cost."""


class OracleError(DepthEditError):
    """Base class for generative-oracle failures."""


class CapabilityMissingError(OracleError):
    """The oracle does not advertise a required capability."""


class OracleTransportError(OracleError):
    """HTTP transport to the oracle failed after retry."""


class OracleTimeoutError(OracleTransportError):
    """The oracle did not answer within the configured timeout."""


class DimensionMismatchError(InvalidInputError):
    """Two arrays that must share dimensions do not."""


class ProtocolError(OracleError):
    """The oracle answered with a malformed or unexpected payload."""

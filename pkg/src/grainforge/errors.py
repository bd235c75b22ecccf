"""Exception and warning types shared across the package."""


class GrainForgeError(Exception):
    """Base class for all package-specific errors."""


class InvalidDims(GrainForgeError):
    """Volume dimensions are zero, negative, or would overflow."""


class WindowOutOfBounds(GrainForgeError):
    """A block window does not fit inside the target volume."""


class ShapeMismatch(GrainForgeError):
    """Arrays that must agree in shape do not."""


class FormatError(GrainForgeError):
    """On-disk data is malformed (bad magic, truncation, wrong schema)."""


class IoError(GrainForgeError):
    """Filesystem-level failure while reading or writing."""


class InvalidConfig(GrainForgeError):
    """A configuration value violates its documented constraints."""


class InvalidStep(GrainForgeError):
    """A diffusion step index lies outside [1, T]."""


class InvalidMask(GrainForgeError):
    """An inpainting mask contains values other than 0 and 1."""


class InvalidRequest(GrainForgeError):
    """A backend request violates the advertised limits."""


class BackendError(GrainForgeError):
    """The denoiser backend reported a failure or returned bad shapes."""


class ProtocolError(GrainForgeError):
    """A wire frame could not be parsed."""


class ConnectTimeout(GrainForgeError):
    """Backend endpoint did not complete the handshake in time."""


class RequestTimeout(GrainForgeError):
    """Backend did not answer a request in time."""


class PlanError(GrainForgeError):
    """Generation plan is internally inconsistent (e.g. dependency cycle)."""


class DomainTooSmall(GrainForgeError):
    """Target domain cannot fit a single generation block."""


class NoClusters(GrainForgeError):
    """An operation requiring at least one cluster found none."""


class InsufficientGrains(GrainForgeError):
    """An operation requiring two or more grains got fewer."""


class EmptyInput(GrainForgeError):
    """An operation received an empty value set."""


class NonWatertightWarning(UserWarning):
    """Ray parity disagreed on too many voxels; mesh is likely not closed."""

"""Exception types raised across the package."""


class OTSynthError(Exception):
    """Base class for all package errors."""


class ConfigError(OTSynthError, ValueError):
    """Invalid parameters or incompatible inputs."""


class DegenerateScaleError(ConfigError):
    """A pyramid level would have a dimension smaller than one pixel."""


class InvalidTargetError(ConfigError):
    """Upsampling target is smaller than the source."""


class SlicingError(OTSynthError):
    """A cost block would exceed the memory budget."""


class IncompleteMatchError(OTSynthError):
    """A match map still contains unmatched entries."""


class OracleDomainError(OTSynthError, ValueError):
    """Input outside the domain of the assignment oracle."""

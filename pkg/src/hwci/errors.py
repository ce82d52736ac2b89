"""Exception types raised across the package."""


class HWCIError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(HWCIError, ValueError):
    pass


class DimensionError(HWCIError, ValueError):
    pass


class SingularityError(HWCIError, ValueError):
    pass


class StepSizeError(HWCIError, ValueError):
    """Marching step too coarse for the highest frequency in the band."""


class BandError(HWCIError, ValueError):
    pass


class ConfigurationError(HWCIError, ValueError):
    pass


class ResolutionError(HWCIError, ValueError):
    pass


class UnresolvedTargetError(HWCIError, ValueError):
    """The lateral profile never drops below half maximum inside the ROI."""


class ComparisonError(HWCIError, ValueError):
    pass


class FormatError(HWCIError, ValueError):
    """A binary container did not match the expected layout."""

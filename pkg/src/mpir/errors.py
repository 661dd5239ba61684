"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter is outside its documented domain."""


class ResolutionError(ValueError):
    """The sample step is too coarse for the requested waveform."""


class DegenerateInputError(ValueError):
    """An input carries no usable content (e.g. an all-zero pulse)."""


class GridMismatchError(ValueError):
    """Two sampled objects do not live on a common grid."""


class ConfigMismatchError(ValueError):
    """An object is inconsistent with the system configuration it is used with."""


class InsufficientDataError(ValueError):
    """Not enough data to carry out the requested estimate."""


class InfeasibleGeometryError(RuntimeError):
    """Channel delays cannot satisfy the single-frame containment bound."""

"""Exception types shared across the package."""


class HganError(Exception):
    """Base class for all package errors."""


class ConfigError(HganError):
    """Invalid or unresolvable configuration."""


class DegenerateNetworkError(HganError):
    """The load-bus block of an admittance matrix is singular."""


class StabilityIndexError(HganError):
    """The stability index is undefined for the given input."""


class ImbalanceError(HganError):
    """A scenario grid could not produce enough events of one class."""

    def __init__(self, deficient_label, found, requested):
        self.deficient_label = deficient_label
        self.found = found
        self.requested = requested
        name = "stable" if deficient_label == 1 else "unstable"
        super().__init__(
            f"scenario grid yielded only {found} {name} events "
            f"({requested} requested); widen the fault-duration grid"
        )


class ShapeError(HganError, ValueError):
    """Operand shapes do not agree."""


class TapeMismatchError(HganError):
    """A backward pass was given a tape from a different forward pass."""


class DivergenceError(HganError):
    """Training produced a non-finite loss."""

    def __init__(self, message, last_metrics=None):
        super().__init__(message)
        self.last_metrics = last_metrics


class NotReadyError(HganError):
    """The model has not been trained."""


class FormatError(HganError):
    """A file on disk does not match the expected format or version."""

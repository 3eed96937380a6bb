"""Exception types shared across the package."""


class FlowHarmonyError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(FlowHarmonyError):
    pass


class CodeRangeError(FlowHarmonyError):
    pass


class FormatError(FlowHarmonyError):
    """Malformed file content (flows, tensors, images)."""


class ConfigError(FlowHarmonyError):
    """Invalid or out-of-range configuration value."""

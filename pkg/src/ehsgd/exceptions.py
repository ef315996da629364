"""Exception types raised across the package."""

from __future__ import annotations


class EHSGDError(Exception):
    """Base class for every error raised by ehsgd."""


class InvalidModel(EHSGDError, ValueError):
    """An arrival model is malformed or does not fit the horizon."""


class InvalidSpec(EHSGDError, ValueError):
    """A synthetic-data specification cannot be realized."""


class DimensionMismatch(EHSGDError, ValueError):
    pass


class NonConvergence(EHSGDError, RuntimeError):
    pass


class IncompatiblePolicy(EHSGDError, ValueError):
    """The scheduling policy cannot run on the given arrival models."""


class MissingGap(EHSGDError, RuntimeError):
    """Uniform-slot scheduling needs an inter-arrival gap that is undefined."""


class SchedulingError(EHSGDError, RuntimeError):
    """An internal scheduling invariant was broken (slot overwrite, battery overflow)."""


class StarvationDetected(EHSGDError, RuntimeError):
    """Wait-for-all never found an instant with every battery full."""


class InvalidWeights(EHSGDError, ValueError):
    pass


class PremiseViolated(EHSGDError, ValueError):
    """Learning rate exceeds min{1/(2 mu), 1/L}."""


class ConfigError(EHSGDError):
    pass


class ParseError(ConfigError, ValueError):
    pass


class ValidationError(ConfigError, ValueError):
    """Config invariant violation; ``field`` holds the dotted path of the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")

"""Exception hierarchy for slq_heat."""

from __future__ import annotations


class SlqHeatError(Exception):
    """Base class of every error raised by slq_heat."""


class InvalidArgumentError(SlqHeatError, ValueError):
    """An argument violates a documented precondition."""


class InvalidStateError(SlqHeatError, RuntimeError):
    """Objects were combined that were prepared for different settings."""


class InternalError(SlqHeatError, RuntimeError):
    """A numerical step failed that cannot fail for valid input."""


class ResourceLimitError(SlqHeatError, RuntimeError):
    """The request exceeds a hard size cap."""


class ConfigError(InvalidArgumentError):
    """An experiment configuration could not be loaded or validated."""

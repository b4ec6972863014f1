"""Catalog of separable data profiles g(t, x) = time_factor(t) * space_shape(x)."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from slq_heat._errors import ConfigError
from slq_heat._mesh import SpaceFunction
from slq_heat._types import ProfileConfig

SpaceFactory = Callable[[Sequence[float], float], SpaceFunction]
TimeFactory = Callable[[Sequence[float]], Callable[[float], float]]


def _sine(coefficients: Sequence[float], length: float) -> SpaceFunction:
    """sum_k c_k sin(k pi x / L), k = 1, 2, ..."""
    modes = np.arange(1, len(coefficients) + 1)
    weights = np.asarray(coefficients, dtype=np.float64)

    def shape(x: NDArray[np.float64]) -> NDArray[np.float64]:
        phases = np.multiply.outer(x, modes) * (np.pi / length)
        return np.sin(phases) @ weights

    return shape


def _bubble(coefficients: Sequence[float], length: float) -> SpaceFunction:
    """c x (L - x) / L^2, peaking at c / 4."""
    amplitude = coefficients[0] if coefficients else 1.0

    def shape(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return amplitude * x * (length - x) / length**2

    return shape


def _zero(coefficients: Sequence[float], length: float) -> SpaceFunction:
    def shape(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.zeros_like(x, dtype=np.float64)

    return shape


def _constant(coefficients: Sequence[float]) -> Callable[[float], float]:
    value = coefficients[0] if coefficients else 1.0
    return lambda t: value


def _exp(coefficients: Sequence[float]) -> Callable[[float], float]:
    """a * exp(b t)."""
    a, b = (list(coefficients) + [1.0, 0.0][len(coefficients) :])[:2]
    return lambda t: a * float(np.exp(b * t))


def _poly(coefficients: Sequence[float]) -> Callable[[float], float]:
    """sum_k c_k t^k."""
    polynomial = np.polynomial.Polynomial(coefficients or [1.0])
    return lambda t: float(polynomial(t))


SPACE_PROFILES: dict[str, SpaceFactory] = {
    "sine": _sine,
    "bubble": _bubble,
    "zero": _zero,
}

TIME_PROFILES: dict[str, TimeFactory] = {
    "constant": _constant,
    "exp": _exp,
    "poly": _poly,
}


@dataclass(frozen=True)
class Profile:
    space: str = "zero"
    coefficients: tuple[float, ...] = ()
    time: str = "constant"
    time_coefficients: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.space not in SPACE_PROFILES:
            raise ConfigError(
                f"unknown space profile {self.space!r}; "
                f"choose from {sorted(SPACE_PROFILES)}"
            )
        if self.time not in TIME_PROFILES:
            raise ConfigError(
                f"unknown time profile {self.time!r}; "
                f"choose from {sorted(TIME_PROFILES)}"
            )

    def at(self, t: float, length: float) -> SpaceFunction:
        """The spatial function x -> g(t, x)."""
        shape = SPACE_PROFILES[self.space](self.coefficients, length)
        factor = TIME_PROFILES[self.time](self.time_coefficients)(t)

        def evaluate(x: NDArray[np.float64]) -> NDArray[np.float64]:
            return factor * shape(x)

        return evaluate

    def to_config(self) -> ProfileConfig:
        return ProfileConfig(
            space=self.space,
            coefficients=list(self.coefficients),
            time=self.time,
            time_coefficients=list(self.time_coefficients),
        )


def build_profile(raw: ProfileConfig | None, default: Profile) -> Profile:
    if raw is None:
        return default
    if not isinstance(raw, dict):
        raise ConfigError(f"a profile must be a JSON object, got {type(raw).__name__}")
    unknown = set(raw) - set(ProfileConfig.__annotations__)
    if unknown:
        raise ConfigError(f"unknown profile keys: {sorted(unknown)}")
    try:
        coefficients = tuple(
            float(c) for c in raw.get("coefficients", default.coefficients)
        )
        time_coefficients = tuple(
            float(c) for c in raw.get("time_coefficients", default.time_coefficients)
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid profile coefficients: {exc}") from exc
    return Profile(
        space=raw.get("space", default.space),
        coefficients=coefficients,
        time=raw.get("time", default.time),
        time_coefficients=time_coefficients,
    )

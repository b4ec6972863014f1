"""Experiment configuration: JSON loading, defaults and validation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

from slq_heat._constants import (
    CROSSCHECK_CELLS,
    CROSSCHECK_STEPS,
    DEFAULT_DOMAIN_LENGTH,
    DEFAULT_GD_MAX_ITERS,
    DEFAULT_GD_TOL,
    DEFAULT_N_PATHS,
    DEFAULT_SEED,
    DEFAULT_SPACE_LADDER,
    DEFAULT_SPACE_REFERENCE,
    DEFAULT_SPACE_SWEEP_STEPS,
    DEFAULT_TIME_LADDER,
    DEFAULT_TIME_REFERENCE,
    DEFAULT_TIME_SWEEP_CELLS,
    GD_EXPERIMENT_CELLS,
    GD_EXPERIMENT_ITERS,
    GD_EXPERIMENT_STEPS,
    MAX_REGRESSION_DEGREE,
    MAX_TREE_STEPS,
    MIN_FIT_LEVELS,
    MIN_MESH_CELLS,
)
from slq_heat._errors import ConfigError
from slq_heat._profiles import Profile, build_profile
from slq_heat._types import ExperimentConfig

logger = logging.getLogger("slq_heat")

# experiment id -> sweep direction it fixes (None: chosen in the config)
RATE_EXPERIMENTS: dict[str, str | None] = {
    "forward-time": "time",
    "forward-space": "space",
    "bspde-y": None,
    "bspde-z": None,
    "slq-time": "time",
    "slq-space": "space",
}
GD_EXPERIMENT = "gd-contraction"
CROSSCHECK_EXPERIMENT = "oracle-crosscheck"
EXPERIMENT_IDS = (*RATE_EXPERIMENTS, GD_EXPERIMENT, CROSSCHECK_EXPERIMENT)
PATH_BACKEND_EXPERIMENTS = ("forward-time", "forward-space")

DEFAULT_X0 = Profile(space="sine", coefficients=(1.0,))
DEFAULT_SIGMA = Profile(
    space="sine", coefficients=(1.0,), time="exp", time_coefficients=(1.0, -1.0)
)
DEFAULT_TARGET = Profile(
    space="sine", coefficients=(1.0,), time="poly", time_coefficients=(1.0, 1.0)
)


@dataclass(frozen=True)
class ExperimentSpec:
    """A validated experiment; build one with :func:`config_from_dict`."""

    experiment: str
    sweep: str = "none"
    backend: str = "chaos"
    T: float = 1.0
    alpha: float = 1.0
    length: float = DEFAULT_DOMAIN_LENGTH
    x0: Profile = DEFAULT_X0
    sigma: Profile = DEFAULT_SIGMA
    target: Profile = DEFAULT_TARGET
    ladder: tuple[int, ...] = ()
    reference: int = 0
    n_cells: int = DEFAULT_TIME_SWEEP_CELLS
    n_steps: int = DEFAULT_SPACE_SWEEP_STEPS
    n_paths: int = DEFAULT_N_PATHS
    seed: int = DEFAULT_SEED
    basis_degree: int = 1
    kappa: float | None = None
    max_iters: int = DEFAULT_GD_MAX_ITERS
    tol: float = DEFAULT_GD_TOL
    threads: int = 1
    output: str | None = None

    @property
    def expected_order(self) -> int:
        """Squared-error order: 1 in tau, 2 in h."""
        return 1 if self.sweep == "time" else 2

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        output: str | None = None,
        threads: int | None = None,
    ) -> ExperimentSpec:
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if output is not None:
            changes["output"] = output
        if threads is not None:
            changes["threads"] = threads
        updated = replace(self, **changes)
        _validate(updated)
        return updated

    def to_config(self) -> ExperimentConfig:
        """Fully resolved configuration, suitable for echoing back as JSON."""
        config = ExperimentConfig(
            experiment=self.experiment,
            sweep=self.sweep,
            backend=self.backend,
            T=self.T,
            alpha=self.alpha,
            length=self.length,
            x0=self.x0.to_config(),
            sigma=self.sigma.to_config(),
            target=self.target.to_config(),
            ladder=list(self.ladder),
            reference=self.reference,
            n_cells=self.n_cells,
            n_steps=self.n_steps,
            n_paths=self.n_paths,
            seed=self.seed,
            basis_degree=self.basis_degree,
            max_iters=self.max_iters,
            tol=self.tol,
            threads=self.threads,
        )
        if self.kappa is not None:
            config["kappa"] = self.kappa
        if self.output is not None:
            config["output"] = self.output
        return config


def _is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def _validate(spec: ExperimentSpec) -> None:
    if not spec.T > 0:
        raise ConfigError(f"T must be positive, got {spec.T}")
    if spec.alpha < 0:
        raise ConfigError(f"alpha must be non-negative, got {spec.alpha}")
    if not spec.length > 0:
        raise ConfigError(f"length must be positive, got {spec.length}")
    if spec.n_paths < 1:
        raise ConfigError(f"n_paths must be at least 1, got {spec.n_paths}")
    if spec.seed < 0:
        raise ConfigError(f"seed must be non-negative, got {spec.seed}")
    if spec.threads < 1:
        raise ConfigError(f"threads must be at least 1, got {spec.threads}")
    if not 0 <= spec.basis_degree <= MAX_REGRESSION_DEGREE:
        raise ConfigError(f"basis_degree must lie in 0..{MAX_REGRESSION_DEGREE}")
    if spec.kappa is not None and not spec.kappa > 0:
        raise ConfigError(f"kappa must be positive, got {spec.kappa}")
    if spec.max_iters < 1 or spec.tol < 0:
        raise ConfigError("max_iters must be at least 1 and tol non-negative")
    if spec.n_cells < MIN_MESH_CELLS:
        raise ConfigError(
            f"n_cells must be at least {MIN_MESH_CELLS}, got {spec.n_cells}"
        )
    if spec.n_steps < 1 or spec.T / spec.n_steps > 1:
        raise ConfigError(f"n_steps={spec.n_steps} gives tau outside (0, 1]")
    if spec.backend not in ("chaos", "paths"):
        raise ConfigError(f"backend must be 'chaos' or 'paths', got {spec.backend!r}")
    if spec.backend == "paths" and spec.experiment not in PATH_BACKEND_EXPERIMENTS:
        raise ConfigError(f"{spec.experiment} supports the chaos backend only")
    if spec.experiment == CROSSCHECK_EXPERIMENT and spec.n_steps > MAX_TREE_STEPS:
        raise ConfigError(f"crosscheck trees are limited to {MAX_TREE_STEPS} steps")
    if spec.experiment in RATE_EXPERIMENTS:
        _validate_ladder(spec)


def _validate_ladder(spec: ExperimentSpec) -> None:
    ladder = spec.ladder
    if len(ladder) < MIN_FIT_LEVELS:
        raise ConfigError(
            f"a ladder needs at least {MIN_FIT_LEVELS} levels, got {len(ladder)}"
        )
    for coarse, fine in zip(ladder, ladder[1:]):
        if fine <= coarse or fine % coarse or not _is_power_of_two(fine // coarse):
            raise ConfigError(
                f"ladder {list(ladder)} is not a dyadic refinement sequence"
            )
    ratio, remainder = divmod(spec.reference, ladder[-1])
    if remainder or ratio < 2 or not _is_power_of_two(ratio):
        raise ConfigError(
            f"reference {spec.reference} is not a dyadic refinement of {ladder[-1]}"
        )
    if spec.sweep == "time" and spec.T / ladder[0] > 1:
        raise ConfigError(f"N={ladder[0]} gives tau > 1")
    if spec.sweep == "space" and ladder[0] < MIN_MESH_CELLS:
        raise ConfigError(f"meshes need at least {MIN_MESH_CELLS} cells")


def _sweep_for(experiment: str, requested: str | None) -> str:
    if experiment in RATE_EXPERIMENTS:
        fixed = RATE_EXPERIMENTS[experiment]
        if fixed is not None:
            if requested not in (None, fixed):
                raise ConfigError(f"{experiment} always sweeps {fixed}")
            return fixed
        sweep = requested or "time"
        if sweep not in ("time", "space"):
            raise ConfigError(f"sweep must be 'time' or 'space', got {sweep!r}")
        return sweep
    if requested not in (None, "none"):
        raise ConfigError(f"{experiment} has no sweep")
    return "none"


def _defaults(experiment: str, sweep: str) -> dict[str, Any]:
    if experiment == GD_EXPERIMENT:
        return {
            "n_cells": GD_EXPERIMENT_CELLS,
            "n_steps": GD_EXPERIMENT_STEPS,
            "max_iters": GD_EXPERIMENT_ITERS,
        }
    if experiment == CROSSCHECK_EXPERIMENT:
        return {"n_cells": CROSSCHECK_CELLS, "n_steps": CROSSCHECK_STEPS}
    if sweep == "time":
        return {"ladder": DEFAULT_TIME_LADDER, "reference": DEFAULT_TIME_REFERENCE}
    return {"ladder": DEFAULT_SPACE_LADDER, "reference": DEFAULT_SPACE_REFERENCE}


_SCALARS: dict[str, type] = {
    "backend": str,
    "T": float,
    "alpha": float,
    "length": float,
    "reference": int,
    "n_cells": int,
    "n_steps": int,
    "n_paths": int,
    "seed": int,
    "basis_degree": int,
    "kappa": float,
    "max_iters": int,
    "tol": float,
    "threads": int,
    "output": str,
}


def _coerce(key: str, value: Any) -> Any:
    kind = _SCALARS[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if kind is float and (
        isinstance(value, bool) or not isinstance(value, int | float)
    ):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if kind is str and not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return kind(value)


def config_from_dict(raw: ExperimentConfig | dict[str, Any]) -> ExperimentSpec:
    """Validate a decoded JSON object and fill in per-experiment defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("the configuration must be a JSON object")
    unknown = set(raw) - set(ExperimentConfig.__annotations__)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENT_IDS:
        raise ConfigError(
            f"unknown experiment {experiment!r}; choose from {list(EXPERIMENT_IDS)}"
        )
    sweep = _sweep_for(experiment, raw.get("sweep"))
    values: dict[str, Any] = _defaults(experiment, sweep)
    for key, value in raw.items():
        if key in _SCALARS:
            values[key] = _coerce(key, value)
    if "ladder" in raw:
        ladder = raw["ladder"]
        if not isinstance(ladder, list) or not all(
            isinstance(level, int) and not isinstance(level, bool) for level in ladder
        ):
            raise ConfigError("ladder must be a list of integers")
        values["ladder"] = tuple(ladder)
    spec = ExperimentSpec(
        experiment=experiment,
        sweep=sweep,
        x0=build_profile(raw.get("x0"), DEFAULT_X0),
        sigma=build_profile(raw.get("sigma"), DEFAULT_SIGMA),
        target=build_profile(raw.get("target"), DEFAULT_TARGET),
        **values,
    )
    _validate(spec)
    logger.debug("Resolved configuration for %s", experiment)
    return spec


def load_config(path: str | Path) -> ExperimentSpec:
    try:
        with Path(path).open(encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)

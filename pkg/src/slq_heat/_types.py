"""TypedDicts for the JSON experiment configuration and the report rows."""

from __future__ import annotations

from typing import TypedDict


class ProfileConfig(TypedDict, total=False):
    """A separable profile g(t, x) = time_factor(t) * space_shape(x)."""

    space: str
    coefficients: list[float]
    time: str
    time_coefficients: list[float]


class ExperimentConfig(TypedDict, total=False):
    """An experiment JSON file; every key except ``experiment`` is optional."""

    experiment: str
    sweep: str
    backend: str
    T: float
    alpha: float
    length: float
    x0: ProfileConfig
    sigma: ProfileConfig
    target: ProfileConfig
    ladder: list[int]
    reference: int
    n_cells: int
    n_steps: int
    n_paths: int
    seed: int
    basis_degree: int
    kappa: float
    max_iters: int
    tol: float
    threads: int
    output: str


class ReportRow(TypedDict):
    """One CSV row; column order follows ``CSV_HEADER``."""

    level: int
    h: float
    tau: float
    n_paths: int
    metric: str
    squared_error: float
    std_err: float
    fitted_order: float | None
    passed: bool | None


class RunInfo(TypedDict):
    """Sidecar written next to every CSV result."""

    config: ExperimentConfig
    version: str
    wall_time_seconds: float
    passed: bool

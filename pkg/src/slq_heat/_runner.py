"""Dispatch a validated experiment to the matching driver."""

from __future__ import annotations

import logging
from typing import Protocol

from slq_heat._config import CROSSCHECK_EXPERIMENT, GD_EXPERIMENT, ExperimentSpec
from slq_heat._control import solve_optimality
from slq_heat._crosscheck import run_crosscheck
from slq_heat._gradient import GdConfig, GdReport, run_gd
from slq_heat._problem import discretise
from slq_heat._rates import run_rate_experiment
from slq_heat._types import ReportRow

logger = logging.getLogger("slq_heat")


class Report(Protocol):
    """What every experiment returns: CSV rows and an overall verdict."""

    @property
    def passed(self) -> bool: ...

    def rows(self) -> list[ReportRow]: ...


def run_gd_experiment(spec: ExperimentSpec) -> GdReport:
    """Gradient descent from zero, measured against the Riccati optimum."""
    problem = discretise(spec, spec.n_cells, spec.n_steps).control_problem()
    config = GdConfig(kappa=spec.kappa, max_iters=spec.max_iters, tol=spec.tol)
    return run_gd(problem, config, reference=solve_optimality(problem))


def run_experiment(spec: ExperimentSpec) -> Report:
    logger.info("Running experiment %s", spec.experiment)
    if spec.experiment == GD_EXPERIMENT:
        return run_gd_experiment(spec)
    if spec.experiment == CROSSCHECK_EXPERIMENT:
        return run_crosscheck(spec)
    return run_rate_experiment(spec)

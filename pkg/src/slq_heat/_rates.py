"""Convergence-rate experiments against a finer reference solution.

Every level is compared with a reference computed on the same noise: in
chaos-affine form the comparison is exact, with the paths backend the
coarse increments are sums of the reference increments.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Protocol

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from slq_heat._backward import DriverTiming, solve_backward_exact, tracking_problem
from slq_heat._config import ExperimentSpec
from slq_heat._constants import (
    MIN_FIT_LEVELS,
    ORDER_THRESHOLDS,
    USABLE_ERROR_FACTOR,
)
from slq_heat._control import optimal_chaos, solve_optimality
from slq_heat._errors import InternalError, InvalidArgumentError
from slq_heat._forward import solve_forward_chaos, step_forward
from slq_heat._mesh import p0_prolongation_matrix, prolongation_matrix
from slq_heat._noise import NoiseEnsemble, coarsen, sample_ensemble
from slq_heat._problem import Discretisation, discretise
from slq_heat._processes import ChaosAffineProcess
from slq_heat._types import ReportRow

logger = logging.getLogger("slq_heat")

# "state": P1 field at t_0..t_N; "control": P0 field at t_0..t_{N-1};
# "increment": P1 field at t_0..t_{N-1}
Kind = Literal["state", "control", "increment"]


@dataclass(frozen=True)
class RateRow:
    level: int
    h: float
    tau: float
    n_paths: int
    metric: str
    squared_error: float
    std_err: float


@dataclass(frozen=True)
class MetricFit:
    metric: str
    expected_order: int
    fitted_order: float | None
    usable_levels: int
    passed: bool


@dataclass
class RateReport:
    experiment: str
    sweep: str
    levels: list[RateRow] = field(default_factory=list)
    fits: dict[str, MetricFit] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.fits) and all(fit.passed for fit in self.fits.values())

    def rows(self) -> list[ReportRow]:
        rows = []
        for row in self.levels:
            fit = self.fits.get(row.metric)
            rows.append(
                ReportRow(
                    level=row.level,
                    h=row.h,
                    tau=row.tau,
                    n_paths=row.n_paths,
                    metric=row.metric,
                    squared_error=row.squared_error,
                    std_err=row.std_err,
                    fitted_order=None if fit is None else fit.fitted_order,
                    passed=None if fit is None else fit.passed,
                )
            )
        return rows


def observed_order(samples: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(error) against log(parameter)."""
    if len(samples) < MIN_FIT_LEVELS:
        raise InvalidArgumentError(
            f"at least {MIN_FIT_LEVELS} levels are needed for a fit, got {len(samples)}"
        )
    params, errors = (np.asarray(column, dtype=np.float64) for column in zip(*samples))
    if np.any(params <= 0) or np.any(errors <= 0):
        raise InvalidArgumentError("parameters and errors must be positive")
    slope, _ = np.polyfit(np.log(params), np.log(errors), 1)
    return float(slope)


def fit_metric(
    metric: str, rows: Sequence[RateRow], parameter: str, expected: int
) -> MetricFit:
    """Fit the order over levels whose error stands clear of its sampling noise."""
    usable = [
        row
        for row in rows
        if row.squared_error > 0
        and not row.squared_error <= USABLE_ERROR_FACTOR * row.std_err
    ]
    if len(usable) < MIN_FIT_LEVELS:
        logger.warning(
            "%s: only %d usable level(s), no order fitted", metric, len(usable)
        )
        return MetricFit(metric, expected, None, len(usable), False)
    order = observed_order(
        [(getattr(row, parameter), row.squared_error) for row in usable]
    )
    passed = order >= ORDER_THRESHOLDS[expected]
    return MetricFit(metric, expected, order, len(usable), passed)


Quantities = dict[str, tuple[ChaosAffineProcess, Kind]]


class RateExperiment(Protocol):
    """Produces the compared quantities at one resolution."""

    @property
    def name(self) -> str: ...

    def quantities(self, problem: Discretisation) -> Quantities: ...


@dataclass(frozen=True)
class ForwardExperiment:
    name: str

    def quantities(self, problem: Discretisation) -> Quantities:
        return {"state": (solve_forward_chaos(problem.forward_problem()), "state")}


def _uncontrolled_bspde(
    problem: Discretisation,
) -> tuple[ChaosAffineProcess, ChaosAffineProcess]:
    """Y and Z of the tracking adjoint along the uncontrolled state."""
    states = solve_forward_chaos(problem.forward_problem())
    backward = tracking_problem(
        problem.ops,
        problem.grid,
        states,
        problem.target,
        problem.alpha,
        DriverTiming.CURRENT,
    )
    solution = solve_backward_exact(backward)
    if not isinstance(solution.Y, ChaosAffineProcess) or not isinstance(
        solution.Z, ChaosAffineProcess
    ):
        raise InternalError("exact backward solve returned pathwise values")
    return solution.Y, solution.Z


@dataclass(frozen=True)
class BspdeExperiment:
    name: str
    component: Literal["Y", "Z"]

    def quantities(self, problem: Discretisation) -> Quantities:
        Y, Z = _uncontrolled_bspde(problem)
        if self.component == "Y":
            return {"adjoint": (Y, "state")}
        return {"z": (Z, "increment")}


@dataclass(frozen=True)
class SlqExperiment:
    name: str

    def quantities(self, problem: Discretisation) -> Quantities:
        control_problem = problem.control_problem()
        solution = optimal_chaos(control_problem, solve_optimality(control_problem))
        out: Quantities = {}
        for key, process, kind in (
            ("control", solution.U, "control"),
            ("state", solution.X, "state"),
            ("adjoint", solution.Y, "state"),
        ):
            if not isinstance(process, ChaosAffineProcess):
                raise InternalError("optimal solution must be chaos-affine")
            out[key] = (process, kind)
        return out


RATE_REGISTRY: dict[str, RateExperiment] = {
    "forward-time": ForwardExperiment("forward-time"),
    "forward-space": ForwardExperiment("forward-space"),
    "bspde-y": BspdeExperiment("bspde-y", "Y"),
    "bspde-z": BspdeExperiment("bspde-z", "Z"),
    "slq-time": SlqExperiment("slq-time"),
    "slq-space": SlqExperiment("slq-space"),
}


def _aligned_difference(
    coarse: Discretisation,
    fine: Discretisation,
    process: ChaosAffineProcess,
    reference: ChaosAffineProcess,
    kind: Kind,
    sweep: str,
) -> tuple[ChaosAffineProcess, list[int]]:
    """Coarse process expressed on the reference discretisation, minus the reference.

    Also returns the reference time indices that coincide with coarse grid points.
    """
    if sweep == "time":
        factor = fine.grid.refinement_factor(coarse.grid)
        lifted = process.refine_time(factor)
        coarse_points = list(range(0, process.n_times * factor, factor))
    else:
        if kind == "control":
            matrix = p0_prolongation_matrix(coarse.ops.mesh, fine.ops.mesh)
        else:
            matrix = prolongation_matrix(coarse.ops.mesh, fine.ops.mesh)
        lifted = process.map_linear(_sparse_map(matrix))
        coarse_points = list(range(process.n_times))
    return lifted - reference, coarse_points


def _sparse_map(
    matrix: sp.csr_matrix,
) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    def apply(values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.asarray((matrix @ values.T).T)

    return apply


def _chaos_metrics(
    name: str,
    kind: Kind,
    diff: ChaosAffineProcess,
    coarse_points: list[int],
    coarse: Discretisation,
    fine: Discretisation,
) -> dict[str, float]:
    ops = fine.ops
    if kind == "state":
        l2 = diff.second_moments(ops.mass, coarse_points)
        h1 = diff.second_moments(ops.stiffness, coarse_points)
        return {
            f"{name}_l2_max": float(l2.max()),
            f"{name}_h1_sum": coarse.tau * float(h1.sum()),
        }
    weight = ops.cell_mass if kind == "control" else ops.mass
    return {name: fine.tau * float(diff.second_moments(weight).sum())}


def _resolutions(spec: ExperimentSpec, level: int) -> tuple[int, int]:
    """(n_cells, n_steps) of a ladder level or of the reference."""
    if spec.sweep == "time":
        return spec.n_cells, level
    return level, spec.n_steps


def _map_levels(
    spec: ExperimentSpec, work: Callable[[int], list[RateRow]]
) -> list[RateRow]:
    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            batches = list(pool.map(work, spec.ladder))
    else:
        batches = [work(level) for level in spec.ladder]
    return [row for batch in batches for row in batch]


def _run_chaos(spec: ExperimentSpec, experiment: RateExperiment) -> list[RateRow]:
    fine = discretise(spec, *_resolutions(spec, spec.reference))
    reference = experiment.quantities(fine)

    def level_rows(level: int) -> list[RateRow]:
        coarse = discretise(spec, *_resolutions(spec, level))
        rows = []
        for name, (process, kind) in experiment.quantities(coarse).items():
            diff, points = _aligned_difference(
                coarse, fine, process, reference[name][0], kind, spec.sweep
            )
            metrics = _chaos_metrics(name, kind, diff, points, coarse, fine)
            for metric, value in metrics.items():
                rows.append(RateRow(level, coarse.h, coarse.tau, 0, metric, value, 0.0))
        logger.info("%s: level %d done", experiment.name, level)
        return rows

    return _map_levels(spec, level_rows)


def _states_every(
    problem: Discretisation, increments: NDArray[np.float64], stride: int
) -> NDArray[np.float64]:
    """States at t_0, t_stride, t_{2 stride}, ..., shaped (P, N / stride + 1, n_dof)."""
    ops, grid = problem.ops, problem.grid
    state = np.broadcast_to(problem.x0, (increments.shape[0], ops.n_dof)).copy()
    control = np.zeros((increments.shape[0], ops.n_cells))
    recorded = [state]
    for n in range(grid.N):
        state = step_forward(ops, state, control, problem.sigma[n], increments[:, n])
        if (n + 1) % stride == 0:
            recorded.append(state)
    return np.stack(recorded, axis=1)


def _sample_metrics(
    diff: NDArray[np.float64], fine: Discretisation, coarse: Discretisation
) -> dict[str, tuple[float, float]]:
    """Monte Carlo estimates (value, std err) of the state metrics."""
    n_paths = diff.shape[0]
    mass_norms = np.einsum("pnd,pnd->pn", diff, fine.ops.mass_apply(diff))
    grad_norms = np.einsum("pnd,pnd->pn", diff, fine.ops.stiffness_apply(diff))
    means = mass_norms.mean(axis=0)
    worst = int(np.argmax(means))
    l2_se = float(mass_norms[:, worst].std(ddof=1) / np.sqrt(n_paths))
    h1_samples = coarse.tau * grad_norms.sum(axis=1)
    h1_se = float(h1_samples.std(ddof=1) / np.sqrt(n_paths))
    return {
        "state_l2_max": (float(means[worst]), l2_se),
        "state_h1_sum": (float(h1_samples.mean()), h1_se),
    }


def _run_paths(spec: ExperimentSpec) -> list[RateRow]:
    """Forward sweeps on sampled paths; coarse noise is summed reference noise."""
    fine = discretise(spec, *_resolutions(spec, spec.reference))
    ensemble = sample_ensemble(fine.grid, spec.n_paths, spec.seed, spec.threads)
    # coarse grid points are all grid points of the finest ladder level
    stride = fine.grid.N // spec.ladder[-1] if spec.sweep == "time" else 1
    reference = _states_every(fine, ensemble.increments, stride)

    def level_rows(level: int) -> list[RateRow]:
        coarse = discretise(spec, *_resolutions(spec, level))
        if spec.sweep == "time":
            noise: NoiseEnsemble = coarsen(ensemble, fine.grid.N // level)
            states = _states_every(coarse, noise.increments, 1)
            step = spec.ladder[-1] // level
            diff = states - reference[:, ::step]
        else:
            states = _states_every(coarse, ensemble.increments, 1)
            matrix = prolongation_matrix(coarse.ops.mesh, fine.ops.mesh)
            diff = _sparse_map(matrix)(states.reshape(-1, coarse.ops.n_dof)).reshape(
                states.shape[0], states.shape[1], fine.ops.n_dof
            ) - reference
        return [
            RateRow(level, coarse.h, coarse.tau, spec.n_paths, metric, value, se)
            for metric, (value, se) in _sample_metrics(diff, fine, coarse).items()
        ]

    return _map_levels(spec, level_rows)


def run_rate_experiment(spec: ExperimentSpec) -> RateReport:
    """Run a ladder of resolutions and fit the observed order of every metric."""
    if spec.experiment not in RATE_REGISTRY:
        raise InvalidArgumentError(f"{spec.experiment} is not a rate experiment")
    experiment = RATE_REGISTRY[spec.experiment]
    logger.info(
        "Running %s over %s ladder %s (reference %d)",
        spec.experiment,
        spec.sweep,
        list(spec.ladder),
        spec.reference,
    )
    if spec.backend == "paths":
        rows = _run_paths(spec)
    else:
        rows = _run_chaos(spec, experiment)
    report = RateReport(spec.experiment, spec.sweep, rows)
    parameter = "tau" if spec.sweep == "time" else "h"
    for metric in dict.fromkeys(row.metric for row in rows):
        metric_rows = [row for row in rows if row.metric == metric]
        report.fits[metric] = fit_metric(
            metric, metric_rows, parameter, spec.expected_order
        )
    return report

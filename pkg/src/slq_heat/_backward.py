"""Backward recursion for the discrete BSPDE.

Each step computes
    Y_n = A_0 (E[Y_{n+1} | F_n] - tau f_n),   Z_n = tau^{-1} E[Y_{n+1} dW_{n+1} | F_n].
With ``DriverTiming.NEXT`` the driver is evaluated at t_{n+1} and enters under
the conditional expectation, the form the adjoint of the control problem uses.
Three backends share the recursion: exact chaos-affine, least-squares
regression on sampled paths, and exact averaging on the Bernoulli tree.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from math import comb
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigvalsh
from sklearn.preprocessing import PolynomialFeatures

from slq_heat._constants import (
    MAX_REGRESSION_DEGREE,
    RANK_TOLERANCE,
    REGRESSION_PATHS_PER_BASIS,
    RIDGE_FACTOR,
)
from slq_heat._errors import InternalError, InvalidArgumentError
from slq_heat._mesh import FemOperators
from slq_heat._noise import BernoulliTree, IncrementSource, TimeGrid
from slq_heat._processes import ChaosAffineProcess, ChaosValue, PathProcess

logger = logging.getLogger("slq_heat")


class DriverTiming(Enum):
    CURRENT = "current"
    NEXT = "next"


@dataclass(frozen=True, eq=False)
class BackwardProblem:
    """Terminal value Y_N and driver f_n, n = 0..N, either chaos-affine or pathwise.

    Pathwise data are arrays: terminal (P, n_dof), driver (P, N + 1, n_dof).
    """

    ops: FemOperators
    grid: TimeGrid
    terminal: ChaosValue | NDArray[np.float64]
    driver: ChaosAffineProcess | NDArray[np.float64] | None = None
    timing: DriverTiming = DriverTiming.CURRENT

    def __post_init__(self) -> None:
        self.ops.check_tau(self.grid.tau)
        if isinstance(self.driver, ChaosAffineProcess):
            if self.driver.n_times != self.grid.N + 1:
                raise InvalidArgumentError("the driver must be given at t_0..t_N")
        elif self.driver is not None and self.driver.shape[1] != self.grid.N + 1:
            raise InvalidArgumentError("the driver must be given at t_0..t_N")


@dataclass(frozen=True, eq=False)
class BackwardSolution:
    Y: ChaosAffineProcess | PathProcess
    Z: ChaosAffineProcess | PathProcess
    flags: tuple[str, ...] = ()
    metadata: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class BasisSpec:
    """Polynomials of total degree <= ``degree`` in the nodal values of X_n."""

    degree: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.degree <= MAX_REGRESSION_DEGREE:
            raise InvalidArgumentError(
                f"basis degree must lie in 0..{MAX_REGRESSION_DEGREE}, "
                f"got {self.degree}"
            )

    def dimension(self, n_vars: int) -> int:
        return comb(n_vars + self.degree, self.degree)


def step_backward_exact(
    ops: FemOperators,
    y_next: ChaosValue,
    driver: ChaosValue | None,
    n: int,
    timing: DriverTiming = DriverTiming.CURRENT,
) -> tuple[ChaosValue, ChaosValue]:
    """One exact step from t_{n+1} to t_n; returns (Y_n, Z_n).

    ``driver`` is f_n for CURRENT timing and f_{n+1} for NEXT timing.
    """
    if y_next.depth > n + 1:
        raise InvalidArgumentError(
            f"Y_{n + 1} depends on {y_next.depth} increments, at most {n + 1} allowed"
        )
    target = y_next
    if driver is not None:
        allowed = n if timing is DriverTiming.CURRENT else n + 1
        if driver.depth > allowed:
            raise InvalidArgumentError(
                f"driver depends on increments after t_{allowed}"
            )
        if timing is DriverTiming.NEXT:
            depth = n + 1
            target = ChaosValue(
                y_next.mean - ops.tau * driver.mean,
                y_next.padded(depth) - ops.tau * driver.padded(depth),
            )
    expected = target.conditional(n)
    mean, loadings = expected.mean, expected.loadings
    if driver is not None and timing is DriverTiming.CURRENT:
        mean = mean - ops.tau * driver.mean
        loadings = loadings - ops.tau * driver.padded(n)
    z_n = ChaosValue.deterministic(y_next.loading(n))
    y_n = ChaosValue(ops.a0(mean), ops.a0(loadings))
    return y_n, z_n


def _terminal_chaos(problem: BackwardProblem) -> ChaosValue:
    terminal = problem.terminal
    if not isinstance(terminal, ChaosValue):
        raise InvalidArgumentError(
            "the exact solver needs a chaos-affine terminal value"
        )
    if terminal.depth > problem.grid.N:
        raise InvalidArgumentError("terminal value depends on increments after t_N")
    return terminal


def solve_backward_exact(problem: BackwardProblem) -> BackwardSolution:
    grid, ops = problem.grid, problem.ops
    driver = problem.driver
    if driver is not None and not isinstance(driver, ChaosAffineProcess):
        raise InvalidArgumentError("the exact solver needs a chaos-affine driver")
    y_values: list[ChaosValue] = [_terminal_chaos(problem)] * (grid.N + 1)
    zero = ChaosValue.deterministic(np.zeros(ops.n_dof))
    z_values: list[ChaosValue] = [zero] * grid.N
    for n in range(grid.N - 1, -1, -1):
        f = None
        if driver is not None:
            f = driver.at(n if problem.timing is DriverTiming.CURRENT else n + 1)
        y_values[n], z_values[n] = step_backward_exact(
            ops, y_values[n + 1], f, n, problem.timing
        )
    return BackwardSolution(
        Y=ChaosAffineProcess.from_values(grid, y_values),
        Z=ChaosAffineProcess.from_values(grid, z_values),
    )


def _pathwise_data(
    problem: BackwardProblem, increments: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Terminal (P, n_dof) and driver (P, N + 1, n_dof) along the given paths."""
    n_paths, n_dof = increments.shape[0], problem.ops.n_dof
    terminal = problem.terminal
    if isinstance(terminal, ChaosValue):
        terminal = terminal.evaluate(increments)
    driver = problem.driver
    if driver is None:
        driver = np.zeros((n_paths, problem.grid.N + 1, n_dof))
    elif isinstance(driver, ChaosAffineProcess):
        driver = driver.evaluate(increments)
    if terminal.shape != (n_paths, n_dof) or driver.shape[0] != n_paths:
        raise InvalidArgumentError("pathwise data do not match the number of paths")
    return terminal, driver


def _driver_terms(
    problem: BackwardProblem, driver: NDArray[np.float64], n: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """(term inside the expectation, term outside) at step n."""
    tau = problem.grid.tau
    zero = np.zeros_like(driver[:, n])
    if problem.timing is DriverTiming.NEXT:
        return tau * driver[:, n + 1], zero
    return zero, tau * driver[:, n]


def solve_backward_tree(
    problem: BackwardProblem, tree: BernoulliTree
) -> BackwardSolution:
    """Exact conditional expectations by averaging over sub-trees."""
    if tree.grid.N != problem.grid.N:
        raise InvalidArgumentError("tree and problem use different time grids")
    grid, ops = problem.grid, problem.ops
    terminal, driver = _pathwise_data(problem, tree.increments)
    Y = np.empty((tree.n_paths, grid.N + 1, ops.n_dof))
    Z = np.empty((tree.n_paths, grid.N, ops.n_dof))
    Y[:, grid.N] = terminal
    for n in range(grid.N - 1, -1, -1):
        inside, outside = _driver_terms(problem, driver, n)
        expected = tree.conditional_expectation(Y[:, n + 1] - inside, n)
        Y[:, n] = ops.a0(expected - outside)
        dw = tree.increments[:, n, None]
        Z[:, n] = tree.conditional_expectation(Y[:, n + 1] * dw, n) / grid.tau
    return BackwardSolution(
        Y=PathProcess(grid, Y, tree.weights),
        Z=PathProcess(grid, Z, tree.weights),
    )


def _least_squares(
    features: NDArray[np.float64], targets: NDArray[np.float64]
) -> tuple[NDArray[np.float64], bool]:
    """Normal-equation fit, with a small ridge when the Gram matrix is singular."""
    gram = features.T @ features
    rhs = features.T @ targets
    eigenvalues = eigvalsh(gram)
    ridge = eigenvalues[0] <= RANK_TOLERANCE * eigenvalues[-1]
    if ridge:
        gram = gram + RIDGE_FACTOR * np.trace(gram) * np.eye(gram.shape[0])
    try:
        return cho_solve(cho_factor(gram), rhs), ridge
    except LinAlgError as exc:
        raise InternalError("regression Gram matrix is not positive definite") from exc


def solve_backward_regression(
    problem: BackwardProblem,
    states: PathProcess,
    basis: BasisSpec,
    noise: IncrementSource,
) -> BackwardSolution:
    """Conditional expectations by regression on polynomials of the state X_n."""
    grid, ops = problem.grid, problem.ops
    n_paths = noise.increments.shape[0]
    n_basis = basis.dimension(states.dim)
    if n_paths < REGRESSION_PATHS_PER_BASIS * n_basis:
        raise InvalidArgumentError(
            f"{n_paths} paths are too few for a basis of dimension {n_basis}"
        )
    if states.n_paths != n_paths or states.n_times != grid.N + 1:
        raise InvalidArgumentError("states do not match the noise ensemble")
    terminal, driver = _pathwise_data(problem, noise.increments)
    polynomials = PolynomialFeatures(degree=basis.degree)
    Y = np.empty((n_paths, grid.N + 1, ops.n_dof))
    Z = np.empty((n_paths, grid.N, ops.n_dof))
    Y[:, grid.N] = terminal
    ridge_steps = []
    for n in range(grid.N - 1, -1, -1):
        features = polynomials.fit_transform(states.values[:, n])
        inside, outside = _driver_terms(problem, driver, n)
        target = Y[:, n + 1] - inside
        dw = noise.increments[:, n, None]
        coefficients, ridge = _least_squares(
            features, np.hstack([target, Y[:, n + 1] * dw / grid.tau])
        )
        if ridge:
            ridge_steps.append(n)
        fitted = features @ coefficients
        Y[:, n] = ops.a0(fitted[:, : ops.n_dof] - outside)
        Z[:, n] = fitted[:, ops.n_dof :]
    flags: tuple[str, ...] = ()
    if ridge_steps:
        flags = ("ridge",)
        logger.warning(
            "Regression basis rank deficient at %d step(s); ridge regularisation used",
            len(ridge_steps),
        )
    return BackwardSolution(
        Y=PathProcess(grid, Y),
        Z=PathProcess(grid, Z),
        flags=flags,
        metadata={"ridge_steps": sorted(ridge_steps), "basis_dimension": n_basis},
    )


def tracking_problem(
    ops: FemOperators,
    grid: TimeGrid,
    states: ChaosAffineProcess,
    target: NDArray[np.float64],
    alpha: float,
    timing: DriverTiming,
) -> BackwardProblem:
    """Terminal -alpha (X_N - X~_N) and driver X - X~ of the tracking adjoint."""
    tracking = ChaosAffineProcess(grid, states.mean - target, states.loadings)
    final = tracking.at(grid.N)
    return BackwardProblem(
        ops,
        grid,
        terminal=ChaosValue(-alpha * final.mean, -alpha * final.loadings),
        driver=tracking,
        timing=timing,
    )

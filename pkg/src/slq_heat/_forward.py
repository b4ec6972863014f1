"""Implicit Euler / P1 scheme for the controlled heat equation with additive noise.

One step reads X_{n+1} = A_0 (X_n + tau Pi_h^1 U_n + sigma_n dW_{n+1}).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numpy.typing import NDArray

from slq_heat._errors import InvalidArgumentError
from slq_heat._mesh import FemOperators, FieldP0, FieldP1
from slq_heat._noise import IncrementSource, TimeGrid
from slq_heat._processes import ChaosAffineProcess, PathProcess

logger = logging.getLogger("slq_heat")


class FeedbackControl(Protocol):
    """Control computed on the fly from the current state, U_n = u(n, X_n)."""

    def __call__(self, n: int, state: NDArray[np.float64]) -> NDArray[np.float64]: ...


Control = ChaosAffineProcess | PathProcess | FeedbackControl | None


@dataclass(frozen=True, eq=False)
class ForwardProblem:
    ops: FemOperators
    grid: TimeGrid
    x0: FieldP1
    # sigma[n] multiplies dW_{n+1}; shaped (N, n_dof) or (N + 1, n_dof)
    sigma: NDArray[np.float64]
    control: Control = None

    def __post_init__(self) -> None:
        self.ops.check_tau(self.grid.tau)
        if np.shape(self.x0) != (self.ops.n_dof,):
            raise InvalidArgumentError(
                f"x0 must have {self.ops.n_dof} coefficients, got {np.shape(self.x0)}"
            )
        if self.sigma.ndim != 2 or self.sigma.shape[0] < self.grid.N:
            raise InvalidArgumentError(
                f"sigma must provide one P1 field per step, got {self.sigma.shape}"
            )
        if self.sigma.shape[1] != self.ops.n_dof:
            raise InvalidArgumentError("sigma lives on a different mesh")
        if isinstance(self.control, ChaosAffineProcess | PathProcess):
            if self.control.n_times < self.grid.N:
                raise InvalidArgumentError("control must cover every step n = 0..N-1")
            if self.control.dim != self.ops.n_cells:
                raise InvalidArgumentError("control must be a P0 field per step")


def step_forward(
    ops: FemOperators,
    x_n: FieldP1,
    u_n: FieldP0,
    sigma_n: FieldP1,
    dw: float | NDArray[np.float64],
) -> FieldP1:
    """One implicit step; accepts a batch of paths along the leading axis."""
    noise = np.multiply.outer(np.asarray(dw, dtype=np.float64), sigma_n)
    rhs = ops.mass_apply(x_n + noise) + ops.tau * ops.p0_load(u_n)
    return ops.resolvent_solve(rhs)


def march_forward(
    problem: ForwardProblem,
    increments: NDArray[np.float64],
    control: Control,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """States (P, N + 1, n_dof) and controls (P, N, n_cells) along given increments."""
    ops, grid = problem.ops, problem.grid
    n_paths = increments.shape[0]
    if increments.shape[1] != grid.N:
        raise InvalidArgumentError(
            f"increments have {increments.shape[1]} steps, grid has {grid.N}"
        )
    states = np.empty((n_paths, grid.N + 1, ops.n_dof))
    controls = np.zeros((n_paths, grid.N, ops.n_cells))
    feedback = None
    if isinstance(control, ChaosAffineProcess):
        controls[:] = control.evaluate(increments)[:, : grid.N]
    elif isinstance(control, PathProcess):
        controls[:] = control.values[:, : grid.N]
    else:
        feedback = control
    states[:, 0] = problem.x0
    for n in range(grid.N):
        if feedback is not None:
            controls[:, n] = feedback(n, states[:, n])
        states[:, n + 1] = step_forward(
            ops, states[:, n], controls[:, n], problem.sigma[n], increments[:, n]
        )
    return states, controls


def solve_forward_paths(problem: ForwardProblem, noise: IncrementSource) -> PathProcess:
    """Pathwise solution on a sampled ensemble or on the full Bernoulli tree."""
    if noise.grid.N != problem.grid.N:
        raise InvalidArgumentError("noise and problem use different time grids")
    states, _ = march_forward(problem, noise.increments, problem.control)
    return PathProcess(problem.grid, states, noise.weights)


def solve_forward_chaos(problem: ForwardProblem) -> ChaosAffineProcess:
    """Exact chaos-affine solution for a deterministic or chaos-affine control."""
    control = problem.control
    if control is not None and not isinstance(control, ChaosAffineProcess):
        raise InvalidArgumentError("the chaos solver needs a chaos-affine control")
    ops, grid = problem.ops, problem.grid
    dim = ops.n_dof
    mean = np.empty((grid.N + 1, dim))
    mean[0] = problem.x0
    loadings = [np.zeros((0, dim))]
    for n in range(grid.N):
        rhs_mean = ops.mass_apply(mean[n])
        rhs_old = ops.mass_apply(loadings[n])
        if control is not None:
            rhs_mean = rhs_mean + grid.tau * ops.p0_load(control.mean[n])
            if n:
                rhs_old = rhs_old + grid.tau * ops.p0_load(control.loadings[n])
        mean[n + 1] = ops.resolvent_solve(rhs_mean)
        rhs = np.vstack([rhs_old, ops.mass_apply(problem.sigma[n])])
        loadings.append(ops.resolvent_solve(rhs))
    logger.debug("Forward chaos solve: N=%d, %d dof", grid.N, dim)
    return ChaosAffineProcess(grid, mean, tuple(loadings))

"""Discrete problem data (operators, grid, projected profiles) for one resolution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from slq_heat._config import ExperimentSpec
from slq_heat._control import ControlProblem
from slq_heat._forward import Control, ForwardProblem
from slq_heat._mesh import FemOperators, assemble, build_mesh, project_p1
from slq_heat._noise import TimeGrid, build_grid


@dataclass(frozen=True, eq=False)
class Discretisation:
    ops: FemOperators
    grid: TimeGrid
    alpha: float
    x0: NDArray[np.float64]
    # sigma(t_n), n = 0..N-1
    sigma: NDArray[np.float64]
    # target(t_n), n = 0..N
    target: NDArray[np.float64]

    @property
    def h(self) -> float:
        return self.ops.mesh.h

    @property
    def tau(self) -> float:
        return self.grid.tau

    def forward_problem(self, control: Control = None) -> ForwardProblem:
        return ForwardProblem(self.ops, self.grid, self.x0, self.sigma, control)

    def control_problem(self) -> ControlProblem:
        return ControlProblem(
            self.ops, self.grid, self.alpha, self.x0, self.sigma, self.target
        )


def discretise(spec: ExperimentSpec, n_cells: int, n_steps: int) -> Discretisation:
    """Project the configured profiles onto a uniform mesh and time grid."""
    mesh = build_mesh(spec.length, n_cells)
    grid = build_grid(spec.T, n_steps)
    ops = assemble(mesh, grid.tau)
    times = grid.times
    x0 = project_p1(ops, spec.x0.at(0.0, spec.length))
    sigma = np.stack(
        [project_p1(ops, spec.sigma.at(t, spec.length)) for t in times[:-1]]
    )
    target = np.stack([project_p1(ops, spec.target.at(t, spec.length)) for t in times])
    return Discretisation(ops, grid, spec.alpha, x0, sigma, target)

"""Discrete SLQ problem: optimality system, Riccati feedback and cost evaluation.

The adjoint is normalised so that the gradient of the reduced cost is
U - Pi_h^0 Y, and the optimal pair satisfies Y_n = -P_n X_n + eta_n.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, lu_factor, lu_solve, solve

from slq_heat._backward import BackwardProblem, DriverTiming, solve_backward_exact
from slq_heat._constants import BRUTE_FORCE_MAX_STEPS
from slq_heat._errors import (
    InternalError,
    InvalidArgumentError,
    ResourceLimitError,
)
from slq_heat._forward import (
    Control,
    ForwardProblem,
    march_forward,
    solve_forward_chaos,
)
from slq_heat._mesh import FemOperators, FieldP1
from slq_heat._noise import BernoulliTree, IncrementSource, TimeGrid
from slq_heat._processes import ChaosAffineProcess, ChaosValue, PathProcess

logger = logging.getLogger("slq_heat")


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Minimise the tracking cost of the controlled stochastic heat equation."""

    ops: FemOperators
    grid: TimeGrid
    alpha: float
    x0: FieldP1
    sigma: NDArray[np.float64]
    # projected target X~_n at t_0..t_N
    target: NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise InvalidArgumentError(f"alpha must be non-negative, got {self.alpha}")
        if self.target.shape != (self.grid.N + 1, self.ops.n_dof):
            raise InvalidArgumentError(
                f"target must be shaped {(self.grid.N + 1, self.ops.n_dof)}, "
                f"got {self.target.shape}"
            )
        # validates tau, x0 and sigma
        self.forward()

    def forward(
        self, control: Control = None, *, homogeneous: bool = False
    ) -> ForwardProblem:
        """State equation driven by ``control``; ``homogeneous`` drops X_0 and noise."""
        if homogeneous:
            return ForwardProblem(
                self.ops,
                self.grid,
                np.zeros(self.ops.n_dof),
                np.zeros((self.grid.N, self.ops.n_dof)),
                control,
            )
        return ForwardProblem(self.ops, self.grid, self.x0, self.sigma, control)


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    P: NDArray[np.float64]
    eta: NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class FeedbackLaw:
    """U_n = Pi_h^0 (-P_n X_n + eta_n), usable as a forward-solver control."""

    ops: FemOperators
    riccati: RiccatiSolution

    def adjoint(self, n: int, state: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.riccati.eta[n] - state @ self.riccati.P[n].T

    def __call__(self, n: int, state: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.ops.p1_to_p0(self.adjoint(n, state))


@dataclass(frozen=True, eq=False)
class OptimalSolution:
    X: ChaosAffineProcess | PathProcess
    Y: ChaosAffineProcess | PathProcess
    U: ChaosAffineProcess | PathProcess
    # deterministic for this problem class
    Z: ChaosAffineProcess


@dataclass(frozen=True)
class CostEstimate:
    value: float
    std_err: float


def solve_optimality(problem: ControlProblem) -> RiccatiSolution:
    """Backward Riccati sweep for the feedback matrices P_n and offsets eta_n."""
    ops, grid, tau = problem.ops, problem.grid, problem.grid.tau
    n = ops.n_dof
    identity = np.eye(n)
    a0 = ops.dense_a0()
    coupling = ops.dense_coupling()
    P = np.empty((grid.N + 1, n, n))
    eta = np.empty((grid.N + 1, n))
    P[grid.N] = problem.alpha * identity
    eta[grid.N] = problem.alpha * problem.target[grid.N]
    for k in range(grid.N - 1, -1, -1):
        Q = a0 @ (P[k + 1] + tau * identity) @ a0
        try:
            factor = lu_factor(identity + tau * Q @ coupling, check_finite=True)
        except (LinAlgError, ValueError) as exc:
            raise InternalError(f"Riccati step {k} failed") from exc
        P[k] = lu_solve(factor, Q)
        eta[k] = lu_solve(factor, a0 @ (eta[k + 1] + tau * problem.target[k + 1]))
        if not (np.all(np.isfinite(P[k])) and np.all(np.isfinite(eta[k]))):
            raise InternalError(f"Riccati step {k} produced non-finite values")
    logger.debug("Riccati sweep done: N=%d, %d dof", grid.N, n)
    return RiccatiSolution(P, eta)


def optimal_chaos(problem: ControlProblem, riccati: RiccatiSolution) -> OptimalSolution:
    """Exact chaos-affine optimal state, adjoint and control."""
    ops, grid, tau = problem.ops, problem.grid, problem.grid.tau
    a0 = ops.dense_a0()
    coupling = ops.dense_coupling()
    x_mean = [np.asarray(problem.x0, dtype=np.float64)]
    x_load = [np.zeros((0, ops.n_dof))]
    y_mean, y_load = [], []
    for k in range(grid.N + 1):
        y_mean.append(riccati.eta[k] - riccati.P[k] @ x_mean[k])
        y_load.append(-x_load[k] @ riccati.P[k].T)
        if k == grid.N:
            break
        x_mean.append(a0 @ (x_mean[k] + tau * coupling @ y_mean[k]))
        old = (x_load[k] + tau * y_load[k] @ coupling.T) @ a0.T
        x_load.append(np.vstack([old, a0 @ problem.sigma[k]]))
    X = ChaosAffineProcess(grid, np.vstack(x_mean), tuple(x_load))
    Y = ChaosAffineProcess(grid, np.vstack(y_mean), tuple(y_load))
    U = Y.head(grid.N).map_linear(ops.p1_to_p0)
    return OptimalSolution(X=X, Y=Y, U=U, Z=_optimal_z(problem, riccati, a0))


def _optimal_z(
    problem: ControlProblem, riccati: RiccatiSolution, a0: NDArray[np.float64]
) -> ChaosAffineProcess:
    N = problem.grid.N
    z = np.stack([-riccati.P[k + 1] @ a0 @ problem.sigma[k] for k in range(N)])
    return ChaosAffineProcess.deterministic(problem.grid, z)


def simulate_optimal(
    problem: ControlProblem, riccati: RiccatiSolution, noise: IncrementSource
) -> OptimalSolution:
    """Optimal feedback applied along sampled (or tree) increment paths."""
    if noise.grid.N != problem.grid.N:
        raise InvalidArgumentError("noise and problem use different time grids")
    law = FeedbackLaw(problem.ops, riccati)
    states, controls = march_forward(problem.forward(), noise.increments, law)
    adjoints = np.stack(
        [law.adjoint(k, states[:, k]) for k in range(problem.grid.N + 1)], axis=1
    )
    grid, weights = problem.grid, noise.weights
    return OptimalSolution(
        X=PathProcess(grid, states, weights),
        Y=PathProcess(grid, adjoints, weights),
        U=PathProcess(grid, controls, weights),
        Z=_optimal_z(problem, riccati, problem.ops.dense_a0()),
    )


def control_inner(
    problem: ControlProblem, left: ChaosAffineProcess, right: ChaosAffineProcess
) -> float:
    """Inner product tau * sum_n E[(U_n, V_n)_{L2}] of the discrete control space."""
    N = problem.grid.N
    moments = left.head(N).inner(right.head(N), problem.ops.cell_mass)
    return float(problem.grid.tau * moments.sum())


def control_norm(problem: ControlProblem, control: ChaosAffineProcess) -> float:
    return float(np.sqrt(max(control_inner(problem, control, control), 0.0)))


def _cost_from_chaos(problem: ControlProblem, control: ChaosAffineProcess) -> float:
    tau, N = problem.grid.tau, problem.grid.N
    states = solve_forward_chaos(problem.forward(control))
    error = ChaosAffineProcess(
        problem.grid, states.mean - problem.target, states.loadings
    )
    tracking = error.second_moments(problem.ops.mass)
    effort = control_inner(problem, control, control)
    terminal = 0.5 * problem.alpha * tracking[N]
    return float(0.5 * tau * tracking[1:].sum() + 0.5 * effort + terminal)


def _cost_samples(
    problem: ControlProblem,
    states: NDArray[np.float64],
    controls: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Per-path cost, shaped (n_paths,)."""
    tau, N = problem.grid.tau, problem.grid.N
    error = states - problem.target
    tracking = np.einsum("pnd,pnd->pn", error, problem.ops.mass_apply(error))
    widths = problem.ops.mesh.cell_widths
    effort = np.einsum("pnc,c,pnc->p", controls[:, :N], widths, controls[:, :N])
    return 0.5 * tau * tracking[:, 1:].sum(axis=1) + 0.5 * tau * effort + (
        0.5 * problem.alpha * tracking[:, N]
    )


def evaluate_cost(
    problem: ControlProblem,
    control: Control,
    noise: IncrementSource | None = None,
) -> CostEstimate:
    """Exact cost for a chaos-affine control, sample mean otherwise."""
    if noise is None:
        if not isinstance(control, ChaosAffineProcess):
            raise InvalidArgumentError(
                "a pathwise control needs increments to be evaluated"
            )
        return CostEstimate(_cost_from_chaos(problem, control), 0.0)
    states, controls = march_forward(problem.forward(), noise.increments, control)
    samples = _cost_samples(problem, states, controls)
    paths = PathProcess(problem.grid, states, noise.weights)
    value, std_err = paths.expectation(samples)
    return CostEstimate(value, std_err)


def optimality_residual(
    problem: ControlProblem,
    X: ChaosAffineProcess | PathProcess,
    Y: ChaosAffineProcess | PathProcess,
    U: ChaosAffineProcess | PathProcess,
) -> float:
    """||U - Pi_h^0 Y|| in the discrete control norm."""
    N, ops = problem.grid.N, problem.ops
    if X.n_times != N + 1 or Y.n_times != N + 1:
        raise InvalidArgumentError("state and adjoint must be given at t_0..t_N")
    if isinstance(U, ChaosAffineProcess) and isinstance(Y, ChaosAffineProcess):
        gap = U.head(N) - Y.head(N).map_linear(ops.p1_to_p0)
        return control_norm(problem, gap)
    if isinstance(U, PathProcess) and isinstance(Y, PathProcess):
        diff = U.values[:, :N] - ops.p1_to_p0(Y.values[:, :N])
        samples = problem.grid.tau * np.einsum(
            "pnc,c,pnc->p", diff, ops.mesh.cell_widths, diff
        )
        return float(np.sqrt(max(U.expectation(samples)[0], 0.0)))
    raise InvalidArgumentError("U and Y must use the same representation")


def quadratic_expansion_check(
    problem: ControlProblem,
    u_star: ChaosAffineProcess,
    u: ChaosAffineProcess,
) -> tuple[float, float]:
    """(J(U) - J(U*), 0.5 ||U - U*||^2); lhs >= rhs when U* is optimal."""
    lhs = _cost_from_chaos(problem, u) - _cost_from_chaos(problem, u_star)
    rhs = 0.5 * control_inner(problem, u - u_star, u - u_star)
    return lhs, rhs


def _tree_values(process: ChaosAffineProcess | PathProcess) -> NDArray[np.float64]:
    if not isinstance(process, PathProcess):
        raise InvalidArgumentError("residuals are evaluated on pathwise tree values")
    return process.values


def optimality_system_residuals(
    problem: ControlProblem, tree: BernoulliTree, solution: OptimalSolution
) -> dict[str, float]:
    """Largest nodal residual of each optimality equation on the full tree."""
    ops, grid, tau = problem.ops, problem.grid, problem.grid.tau
    X, Y, U = (_tree_values(part) for part in (solution.X, solution.Y, solution.U))
    if X.shape[0] != tree.n_paths:
        raise InvalidArgumentError("solution was not computed on this tree")
    dw = tree.increments
    state = 0.0
    terminal = Y[:, grid.N] + problem.alpha * (X[:, grid.N] - problem.target[grid.N])
    adjoint = float(np.abs(terminal).max())
    for n in range(grid.N):
        lhs = ops.mass_apply(X[:, n + 1]) + tau * ops.stiffness_apply(X[:, n + 1])
        noise = dw[:, n, None] * problem.sigma[n]
        rhs = ops.mass_apply(X[:, n] + noise) + tau * ops.p0_load(U[:, n])
        state = max(state, float(np.abs(lhs - rhs).max()))
        inside = Y[:, n + 1] - tau * (X[:, n + 1] - problem.target[n + 1])
        expected = ops.a0(tree.conditional_expectation(inside, n))
        adjoint = max(adjoint, float(np.abs(Y[:, n] - expected).max()))
    control = float(np.abs(U[:, : grid.N] - ops.p1_to_p0(Y[:, : grid.N])).max())
    return {"state": state, "adjoint": adjoint, "control": control}


def adjoint_pairing(
    problem: ControlProblem, control: ChaosAffineProcess, xi: ChaosAffineProcess
) -> tuple[float, float]:
    """Both sides of the duality between the control-to-state map and the BSPDE.

    lhs = tau sum_{n>=1} E(L U_n, xi_n), rhs = tau sum_n E(U_n, -Pi_h^0 Y_n), with
    Y solving the backward equation driven by xi and terminal value zero.
    """
    ops, grid = problem.ops, problem.grid
    response = solve_forward_chaos(problem.forward(control, homogeneous=True))
    lhs = grid.tau * response.inner(xi, ops.mass)[1:].sum()
    backward = BackwardProblem(
        ops,
        grid,
        terminal=ChaosValue.deterministic(np.zeros(ops.n_dof)),
        driver=xi,
        timing=DriverTiming.NEXT,
    )
    Y = solve_backward_exact(backward).Y
    if not isinstance(Y, ChaosAffineProcess):
        raise InternalError("exact backward solve returned pathwise values")
    averaged = Y.head(grid.N).map_linear(ops.p1_to_p0).scale(-1.0)
    return float(lhs), control_inner(problem, control, averaged)


def brute_force_tree_control(
    problem: ControlProblem, tree: BernoulliTree
) -> PathProcess:
    """Minimise the cost over all tree-adapted controls via the normal equations."""
    grid, ops, tau = problem.grid, problem.ops, problem.grid.tau
    if grid.N > BRUTE_FORCE_MAX_STEPS:
        raise ResourceLimitError(
            f"brute force is limited to N <= {BRUTE_FORCE_MAX_STEPS}, got {grid.N}"
        )
    n_paths = tree.n_paths
    basis = []
    for n in range(grid.N):
        block = 2 ** (grid.N - n)
        for prefix in range(2**n):
            for cell in range(ops.n_cells):
                u = np.zeros((n_paths, grid.N, ops.n_cells))
                u[prefix * block : (prefix + 1) * block, n, cell] = 1.0
                basis.append(u)
    homogeneous = problem.forward(homogeneous=True)
    responses = np.stack(
        [
            march_forward(homogeneous, tree.increments, PathProcess(grid, u))[0]
            for u in basis
        ]
    )
    free, _ = march_forward(problem.forward(), tree.increments, None)
    controls = np.stack(basis)
    w = tree.weights
    mass = ops.mass.toarray()
    time_weight = np.full(grid.N + 1, tau)
    time_weight[0] = 0.0
    time_weight[grid.N] += problem.alpha
    state_gram = np.einsum(
        "ipnd,de,jpne,p,n->ij", responses, mass, responses, w, time_weight
    )
    effort = tau * np.einsum(
        "ipnc,c,jpnc,p->ij", controls, ops.mesh.cell_widths, controls, w
    )
    offset = np.einsum(
        "ipnd,de,pne,p,n->i", responses, mass, free - problem.target, w, time_weight
    )
    try:
        weights = solve(state_gram + effort, -offset, assume_a="pos")
    except LinAlgError as exc:
        raise InternalError("brute-force normal equations are singular") from exc
    logger.debug("Brute-force tree control over %d unknowns", len(basis))
    return PathProcess(grid, np.einsum("i,ipnc->pnc", weights, controls), w)

"""Tests for the exact, tree and regression BSPDE solvers."""

from __future__ import annotations

import numpy as np
import pytest

from slq_heat import (
    BackwardProblem,
    BackwardSolution,
    BasisSpec,
    ChaosAffineProcess,
    ChaosValue,
    DriverTiming,
    ForwardProblem,
    InvalidArgumentError,
    NoiseEnsemble,
    assemble,
    build_grid,
    build_mesh,
    enumerate_tree,
    sample_ensemble,
    solve_backward_exact,
    solve_backward_regression,
    solve_backward_tree,
    solve_forward_chaos,
    solve_forward_paths,
)
from slq_heat.api import step_backward_exact

Fitted = tuple[BackwardProblem, NoiseEnsemble, BackwardSolution]


def _forward(n_cells: int = 4, N: int = 4) -> ForwardProblem:
    grid = build_grid(1.0, N)
    ops = assemble(build_mesh(1.0, n_cells), grid.tau)
    nodes = ops.mesh.node_coords[1:-1]
    sigma = np.tile(0.5 * np.sin(np.pi * nodes), (N, 1))
    return ForwardProblem(ops, grid, np.sin(np.pi * nodes), sigma)


def _tracking_problem(forward: ForwardProblem, timing: DriverTiming) -> BackwardProblem:
    """Terminal -X_N and driver X_n, the structure of the control adjoint."""
    states = solve_forward_chaos(forward)
    final = states.at(forward.grid.N)
    return BackwardProblem(
        forward.ops,
        forward.grid,
        terminal=ChaosValue(-final.mean, -final.loadings),
        driver=states,
        timing=timing,
    )


class TestStepBackwardExact:
    def test_two_cell_example(self) -> None:
        ops = assemble(build_mesh(1.0, 2), 0.5)
        y_next = ChaosValue(np.array([1.0]), np.array([[2.0]]))
        y, z = step_backward_exact(ops, y_next, None, 0)
        np.testing.assert_allclose(y.mean, [1 / 7])
        assert y.depth == 0
        np.testing.assert_allclose(z.mean, [2.0])

    def test_deterministic_data(self) -> None:
        ops = assemble(build_mesh(1.0, 4), 0.25)
        y_next = ChaosValue.deterministic(np.array([1.0, 2.0, 3.0]))
        y, z = step_backward_exact(ops, y_next, None, 2)
        np.testing.assert_allclose(y.mean, ops.a0(y_next.mean))
        np.testing.assert_array_equal(z.mean, 0.0)

    @pytest.mark.parametrize("timing", list(DriverTiming))
    def test_driver_timing(self, timing: DriverTiming) -> None:
        ops = assemble(build_mesh(1.0, 2), 0.5)
        y_next = ChaosValue(np.array([1.0]), np.array([[0.0], [2.0]]))
        driver = ChaosValue(np.array([3.0]), np.array([[1.0]]))
        if timing is DriverTiming.NEXT:
            driver = ChaosValue(np.array([3.0]), np.array([[1.0], [5.0]]))
        y, z = step_backward_exact(ops, y_next, driver, 1, timing)
        np.testing.assert_allclose(y.mean, [(1.0 - 0.5 * 3.0) / 7])
        np.testing.assert_allclose(y.loadings, [[(0.0 - 0.5 * 1.0) / 7]])
        # Z never picks up the driver
        np.testing.assert_allclose(z.mean, [2.0])

    def test_rejects_future_dependence(self) -> None:
        ops = assemble(build_mesh(1.0, 2), 0.5)
        with pytest.raises(InvalidArgumentError):
            step_backward_exact(ops, ChaosValue(np.zeros(1), np.zeros((3, 1))), None, 1)
        with pytest.raises(InvalidArgumentError):
            step_backward_exact(
                ops,
                ChaosValue.deterministic(np.zeros(1)),
                ChaosValue(np.zeros(1), np.zeros((2, 1))),
                1,
                DriverTiming.CURRENT,
            )


class TestSolveBackwardExact:
    def test_deterministic_terminal(self) -> None:
        forward = _forward(N=3)
        g = np.array([1.0, -1.0, 0.5])
        terminal = ChaosValue.deterministic(g)
        problem = BackwardProblem(forward.ops, forward.grid, terminal)
        solution = solve_backward_exact(problem)
        expected = g
        for n in range(2, -1, -1):
            expected = forward.ops.a0(expected)
            np.testing.assert_allclose(solution.Y.mean[n], expected)
        assert isinstance(solution.Z, ChaosAffineProcess)
        np.testing.assert_array_equal(solution.Z.mean, 0.0)

    def test_initial_value_is_deterministic(self) -> None:
        problem = _tracking_problem(_forward(), DriverTiming.NEXT)
        solution = solve_backward_exact(problem)
        assert isinstance(solution.Y, ChaosAffineProcess)
        assert solution.Y.loadings[0].shape[0] == 0

    def test_stability_without_driver(self) -> None:
        forward = _forward(N=6)
        states = solve_forward_chaos(forward)
        problem = BackwardProblem(forward.ops, forward.grid, states.at(forward.grid.N))
        Y = solve_backward_exact(problem).Y
        assert isinstance(Y, ChaosAffineProcess)
        moments = Y.second_moments(forward.ops.mass)
        assert moments.max() <= moments[-1] + 1e-14

    def test_rejects_pathwise_data(self) -> None:
        forward = _forward(N=2)
        problem = BackwardProblem(forward.ops, forward.grid, np.zeros((4, 3)))
        with pytest.raises(InvalidArgumentError):
            solve_backward_exact(problem)

    def test_driver_must_cover_the_grid(self) -> None:
        forward = _forward(N=2)
        with pytest.raises(InvalidArgumentError):
            BackwardProblem(
                forward.ops,
                forward.grid,
                ChaosValue.deterministic(np.zeros(3)),
                driver=ChaosAffineProcess.zeros(forward.grid, 2, 3),
            )


class TestSolveBackwardTree:
    def test_single_step(self) -> None:
        ops = assemble(build_mesh(1.0, 2), 0.5)
        grid = build_grid(0.5, 1)
        tree = enumerate_tree(grid)
        terminal = ChaosValue(np.array([3.0]), np.array([[4.0]]))
        problem = BackwardProblem(ops, grid, terminal)
        solution = solve_backward_tree(problem, tree)
        np.testing.assert_allclose(solution.Y.values[:, 0], [[3 / 7], [3 / 7]])
        np.testing.assert_allclose(solution.Z.values[:, 0], [[4.0], [4.0]])

    def test_deterministic_terminal_has_no_z(self) -> None:
        forward = _forward(N=3)
        problem = BackwardProblem(
            forward.ops, forward.grid, ChaosValue.deterministic(np.ones(3))
        )
        solution = solve_backward_tree(problem, enumerate_tree(forward.grid))
        np.testing.assert_allclose(solution.Z.values, 0.0, atol=1e-14)

    @pytest.mark.parametrize("timing", list(DriverTiming))
    @pytest.mark.parametrize("N", [1, 3, 6])
    def test_matches_exact(self, timing: DriverTiming, N: int) -> None:
        problem = _tracking_problem(_forward(N=N), timing)
        tree = enumerate_tree(problem.grid)
        exact = solve_backward_exact(problem)
        on_tree = solve_backward_tree(problem, tree)
        assert isinstance(exact.Y, ChaosAffineProcess)
        assert isinstance(exact.Z, ChaosAffineProcess)
        np.testing.assert_allclose(
            exact.Y.evaluate(tree.increments), on_tree.Y.values, atol=1e-12
        )
        np.testing.assert_allclose(
            exact.Z.evaluate(tree.increments), on_tree.Z.values, atol=1e-12
        )

    def test_martingale_remainder(self) -> None:
        """Y_{n+1} - E[Y_{n+1} | F_n] - Z_n dW_{n+1} is orthogonal to dW_{n+1}."""
        problem = _tracking_problem(_forward(N=4), DriverTiming.CURRENT)
        tree = enumerate_tree(problem.grid)
        solution = solve_backward_tree(problem, tree)
        Y, Z = solution.Y.values, solution.Z.values
        for n in range(problem.grid.N):
            dw = tree.increments[:, n, None]
            expected = tree.conditional_expectation(Y[:, n + 1], n)
            remainder = Y[:, n + 1] - expected - Z[:, n] * dw
            np.testing.assert_allclose(tree.weights @ remainder, 0.0, atol=1e-12)
            np.testing.assert_allclose(tree.weights @ (remainder * dw), 0.0, atol=1e-12)

    def test_grid_mismatch(self) -> None:
        problem = _tracking_problem(_forward(N=3), DriverTiming.CURRENT)
        with pytest.raises(InvalidArgumentError):
            solve_backward_tree(problem, enumerate_tree(build_grid(1.0, 2)))


class TestSolveBackwardRegression:
    @pytest.fixture(scope="class")
    def fitted(self) -> Fitted:
        forward = _forward(n_cells=4, N=4)
        problem = _tracking_problem(forward, DriverTiming.CURRENT)
        noise = sample_ensemble(forward.grid, 20_000, seed=3)
        states = solve_forward_paths(forward, noise)
        solution = solve_backward_regression(problem, states, BasisSpec(1), noise)
        return problem, noise, solution

    def test_converges_to_exact(self, fitted: Fitted) -> None:
        problem, noise, solution = fitted
        exact = solve_backward_exact(problem).Y
        assert isinstance(exact, ChaosAffineProcess)
        error = solution.Y.values - exact.evaluate(noise.increments)
        mass = problem.ops.mass.toarray()
        error_norms = np.einsum("pnd,de,pne->n", error, mass, error) / noise.n_paths
        scale = exact.second_moments(problem.ops.mass).max()
        assert np.sqrt(error_norms.max()) <= 0.05 * np.sqrt(scale)

    def test_initial_step_uses_ridge(self, fitted: Fitted) -> None:
        _, _, solution = fitted
        assert "ridge" in solution.flags
        assert 0 in solution.metadata["ridge_steps"]
        assert solution.metadata["basis_dimension"] == 4

    def test_deterministic_data(self) -> None:
        forward = _forward(N=3)
        g = np.array([1.0, 2.0, 1.0])
        terminal = ChaosValue.deterministic(g)
        problem = BackwardProblem(forward.ops, forward.grid, terminal)
        noise = sample_ensemble(forward.grid, 200, seed=1)
        states = solve_forward_paths(forward, noise)
        solution = solve_backward_regression(problem, states, BasisSpec(1), noise)
        exact = solve_backward_exact(problem).Y
        assert isinstance(exact, ChaosAffineProcess)
        np.testing.assert_allclose(
            solution.Y.values[:, 0], np.tile(exact.mean[0], (200, 1)), atol=1e-6
        )

    def test_too_few_paths(self) -> None:
        forward = _forward(N=2)
        problem = _tracking_problem(forward, DriverTiming.CURRENT)
        noise = sample_ensemble(forward.grid, 39, seed=0)
        states = solve_forward_paths(forward, noise)
        with pytest.raises(InvalidArgumentError):
            solve_backward_regression(problem, states, BasisSpec(1), noise)

    @pytest.mark.parametrize("degree", [-1, 3])
    def test_basis_degree_range(self, degree: int) -> None:
        with pytest.raises(InvalidArgumentError):
            BasisSpec(degree)

    def test_basis_dimension(self) -> None:
        assert BasisSpec(0).dimension(3) == 1
        assert BasisSpec(1).dimension(3) == 4
        assert BasisSpec(2).dimension(3) == 10

"""Tests for the implicit Euler / P1 forward solvers."""

from __future__ import annotations

import numpy as np
import pytest

from slq_heat import (
    ChaosAffineProcess,
    ForwardProblem,
    InvalidArgumentError,
    InvalidStateError,
    PathProcess,
    assemble,
    build_grid,
    build_mesh,
    enumerate_tree,
    sample_ensemble,
    solve_forward_chaos,
    solve_forward_paths,
)
from slq_heat.api import march_forward, step_forward


def _problem(
    n_cells: int = 4,
    N: int = 4,
    *,
    x0: float = 1.0,
    sigma: float = 0.5,
    control: ChaosAffineProcess | PathProcess | None = None,
) -> ForwardProblem:
    grid = build_grid(1.0, N)
    ops = assemble(build_mesh(1.0, n_cells), grid.tau)
    nodes = ops.mesh.node_coords[1:-1]
    sigma_rows = np.outer(np.linspace(1.0, 0.5, N), sigma * np.sin(np.pi * nodes))
    return ForwardProblem(ops, grid, x0 * np.sin(np.pi * nodes), sigma_rows, control)


def _chaos_control(problem: ForwardProblem, seed: int = 0) -> ChaosAffineProcess:
    rng = np.random.default_rng(seed)
    N, cells = problem.grid.N, problem.ops.n_cells
    return ChaosAffineProcess(
        problem.grid,
        rng.standard_normal((N, cells)),
        tuple(rng.standard_normal((n, cells)) for n in range(N)),
    )


class TestStepForward:
    def test_resolvent_example(self) -> None:
        ops = assemble(build_mesh(1.0, 2), 0.5)
        x = step_forward(ops, np.array([1.0]), np.zeros(2), np.zeros(1), 0.0)
        np.testing.assert_allclose(x, [1 / 7])

    def test_noise_example(self) -> None:
        ops = assemble(build_mesh(1.0, 2), 0.5)
        x = step_forward(ops, np.zeros(1), np.zeros(2), np.array([1.0]), 0.3)
        np.testing.assert_allclose(x, [0.3 / 7])

    def test_zero_inputs(self) -> None:
        ops = assemble(build_mesh(1.0, 4), 0.25)
        np.testing.assert_array_equal(
            step_forward(ops, np.zeros(3), np.zeros(4), np.zeros(3), 0.0), np.zeros(3)
        )

    def test_batch(self) -> None:
        ops = assemble(build_mesh(1.0, 4), 0.25)
        rng = np.random.default_rng(0)
        x, u = rng.standard_normal((2, 3)), rng.standard_normal((2, 4))
        sigma, dw = rng.standard_normal(3), np.array([0.1, -0.2])
        batch = step_forward(ops, x, u, sigma, dw)
        for p in range(2):
            single = step_forward(ops, x[p], u[p], sigma, dw[p])
            np.testing.assert_allclose(batch[p], single)


class TestForwardProblem:
    def test_tau_mismatch(self) -> None:
        ops = assemble(build_mesh(1.0, 4), 0.5)
        with pytest.raises(InvalidStateError):
            ForwardProblem(ops, build_grid(1.0, 4), np.zeros(3), np.zeros((4, 3)))

    def test_wrong_initial_state(self) -> None:
        ops = assemble(build_mesh(1.0, 4), 0.25)
        with pytest.raises(InvalidArgumentError):
            ForwardProblem(ops, build_grid(1.0, 4), np.zeros(4), np.zeros((4, 3)))

    def test_sigma_must_cover_every_step(self) -> None:
        ops = assemble(build_mesh(1.0, 4), 0.25)
        with pytest.raises(InvalidArgumentError):
            ForwardProblem(ops, build_grid(1.0, 4), np.zeros(3), np.zeros((3, 3)))

    def test_control_must_be_p0(self) -> None:
        ops = assemble(build_mesh(1.0, 4), 0.25)
        grid = build_grid(1.0, 4)
        control = ChaosAffineProcess.zeros(grid, 4, 3)
        with pytest.raises(InvalidArgumentError):
            ForwardProblem(ops, grid, np.zeros(3), np.zeros((4, 3)), control)


class TestSolveForwardPaths:
    def test_deterministic_without_noise(self) -> None:
        problem = _problem(sigma=0.0)
        noise = sample_ensemble(problem.grid, 5, seed=1)
        paths = solve_forward_paths(problem, noise)
        expected = [problem.x0]
        for _ in range(problem.grid.N):
            expected.append(problem.ops.a0(expected[-1]))
        for p in range(5):
            np.testing.assert_allclose(paths.values[p], np.vstack(expected), atol=1e-12)

    def test_zero_increments_give_deterministic_flow(self) -> None:
        problem = _problem()
        states, _ = march_forward(problem, np.zeros((1, problem.grid.N)), None)
        np.testing.assert_allclose(states[0, 1], problem.ops.a0(problem.x0))

    @pytest.mark.parametrize("k", [0, 2, 5])
    def test_states_are_adapted(self, k: int) -> None:
        """Changing dW_{k+1} leaves X_0..X_k untouched and moves X_{k+1}."""
        problem = _problem(N=6)
        control = _chaos_control(problem, seed=3)
        increments = sample_ensemble(problem.grid, 8, seed=4).increments
        bumped = increments.copy()
        bumped[:, k] += 1.0
        states, _ = march_forward(problem, increments, control)
        moved, _ = march_forward(problem, bumped, control)
        np.testing.assert_array_equal(moved[:, : k + 1], states[:, : k + 1])
        assert np.all(np.any(moved[:, k + 1] != states[:, k + 1], axis=1))

    @pytest.mark.parametrize("N", [1, 2, 16, 128])
    def test_unforced_flow_is_stable_for_any_step(self, N: int) -> None:
        """||X_{n+1}||_M <= ||X_n||_M without noise and control, whatever tau."""
        grid = build_grid(1.0, N)
        ops = assemble(build_mesh(1.0, 32), grid.tau)
        rng = np.random.default_rng(N)
        starts = rng.standard_normal((5, ops.n_dof))
        for x0 in starts:
            problem = ForwardProblem(ops, grid, x0, np.zeros((N, ops.n_dof)))
            states, _ = march_forward(problem, np.zeros((1, N)), None)
            energy = np.einsum("nd,nd->n", states[0], ops.mass_apply(states[0]))
            assert np.all(np.diff(np.sqrt(energy)) <= 1e-12)

    def test_mean_matches_chaos_mean(self) -> None:
        problem = _problem()
        n_paths = 100_000
        noise = sample_ensemble(problem.grid, n_paths, seed=2)
        paths = solve_forward_paths(problem, noise)
        chaos = solve_forward_chaos(problem)
        final = paths.values[:, -1]
        std_err = final.std(axis=0, ddof=1) / np.sqrt(n_paths)
        gap = np.abs(final.mean(axis=0) - chaos.mean[-1])
        assert np.all(gap <= 4 * std_err + 1e-14)

    def test_tree_weights_are_carried(self) -> None:
        problem = _problem(N=3)
        tree = enumerate_tree(problem.grid)
        assert solve_forward_paths(problem, tree).weights is tree.weights

    def test_grid_mismatch(self) -> None:
        problem = _problem(N=4)
        with pytest.raises(InvalidArgumentError):
            solve_forward_paths(problem, enumerate_tree(build_grid(1.0, 2)))


class TestSolveForwardChaos:
    def test_deterministic_problem(self) -> None:
        problem = _problem(sigma=0.0)
        chaos = solve_forward_chaos(problem)
        expected = problem.ops.a0(problem.ops.a0(problem.x0))
        np.testing.assert_allclose(chaos.mean[2], expected)
        for block in chaos.loadings:
            np.testing.assert_array_equal(block, 0.0)

    def test_matches_tree_paths(self) -> None:
        problem = _problem(N=5)
        problem = _problem(N=5, control=_chaos_control(problem))
        tree = enumerate_tree(problem.grid)
        chaos = solve_forward_chaos(problem)
        paths = solve_forward_paths(problem, tree)
        np.testing.assert_allclose(
            chaos.evaluate(tree.increments), paths.values, atol=1e-12
        )
        mass = problem.ops.mass
        np.testing.assert_allclose(
            chaos.second_moments(mass), paths.second_moments(mass), rtol=1e-12
        )

    def test_pathwise_control_matches_chaos_control(self) -> None:
        base = _problem(N=4)
        control = _chaos_control(base, seed=3)
        noise = sample_ensemble(base.grid, 6, seed=4)
        with_chaos = solve_forward_paths(_problem(N=4, control=control), noise)
        pathwise = PathProcess(base.grid, control.evaluate(noise.increments))
        with_paths = solve_forward_paths(_problem(N=4, control=pathwise), noise)
        np.testing.assert_allclose(with_chaos.values, with_paths.values)

    def test_superposition(self) -> None:
        """X(x0, U, sigma) = X(x0, 0, 0) + X(0, U, 0) + X(0, 0, sigma)."""
        base = _problem(N=4)
        control = _chaos_control(base, seed=5)
        full = solve_forward_chaos(_problem(N=4, control=control))
        parts = (
            solve_forward_chaos(_problem(N=4, sigma=0.0))
            + solve_forward_chaos(_problem(N=4, x0=0.0, sigma=0.0, control=control))
            + solve_forward_chaos(_problem(N=4, x0=0.0))
        )
        np.testing.assert_allclose(full.mean, parts.mean, atol=1e-12)
        for a, b in zip(full.loadings, parts.loadings, strict=True):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_rejects_pathwise_control(self) -> None:
        base = _problem()
        control = PathProcess(base.grid, np.zeros((1, base.grid.N, base.ops.n_cells)))
        with pytest.raises(InvalidArgumentError):
            solve_forward_chaos(_problem(control=control))

    def test_feedback_control(self) -> None:
        base = _problem()
        noise = sample_ensemble(base.grid, 3, seed=6)
        states, controls = march_forward(
            base, noise.increments, lambda n, state: base.ops.p1_to_p0(-state)
        )
        np.testing.assert_allclose(controls[:, 2], base.ops.p1_to_p0(-states[:, 2]))

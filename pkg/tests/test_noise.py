"""Tests for time grids, sampled increments and the Bernoulli tree."""

from __future__ import annotations

import numpy as np
import pytest

from slq_heat import (
    InvalidArgumentError,
    ResourceLimitError,
    build_grid,
    enumerate_tree,
    sample_ensemble,
)
from slq_heat.api import coarsen


class TestBuildGrid:
    def test_two_steps(self) -> None:
        grid = build_grid(1.0, 2)
        assert grid.tau == pytest.approx(0.5)
        np.testing.assert_allclose(grid.times, [0.0, 0.5, 1.0])

    def test_fine_grid(self) -> None:
        assert build_grid(1.0, 64).tau == pytest.approx(1 / 64)

    @pytest.mark.parametrize(("T", "N"), [(2.0, 1), (0.0, 4), (-1.0, 4), (1.0, 0)])
    def test_invalid_arguments(self, T: float, N: int) -> None:
        with pytest.raises(InvalidArgumentError):
            build_grid(T, N)

    def test_refinement_factor(self) -> None:
        assert build_grid(1.0, 16).refinement_factor(build_grid(1.0, 4)) == 4
        with pytest.raises(InvalidArgumentError):
            build_grid(1.0, 6).refinement_factor(build_grid(1.0, 4))


class TestSampleEnsemble:
    def test_deterministic_for_a_seed(self) -> None:
        grid = build_grid(1.0, 8)
        first = sample_ensemble(grid, 50, seed=7)
        second = sample_ensemble(grid, 50, seed=7)
        assert np.array_equal(first.increments, second.increments)

    def test_different_seeds_differ(self) -> None:
        grid = build_grid(1.0, 8)
        first = sample_ensemble(grid, 10, seed=1)
        second = sample_ensemble(grid, 10, seed=2)
        assert not np.array_equal(first.increments, second.increments)

    def test_path_does_not_depend_on_ensemble_size(self) -> None:
        grid = build_grid(1.0, 8)
        small = sample_ensemble(grid, 5, seed=3)
        large = sample_ensemble(grid, 40, seed=3)
        assert np.array_equal(small.increments, large.increments[:5])

    def test_threads_do_not_change_the_draw(self) -> None:
        grid = build_grid(1.0, 8)
        serial = sample_ensemble(grid, 64, seed=11)
        threaded = sample_ensemble(grid, 64, seed=11, threads=4)
        assert np.array_equal(serial.increments, threaded.increments)

    def test_moments(self) -> None:
        grid = build_grid(1.0, 4)
        n_paths = 100_000
        ensemble = sample_ensemble(grid, n_paths, seed=0)
        tau = grid.tau
        assert ensemble.increments.shape == (n_paths, 4)
        variance = ensemble.increments.var(axis=0)
        assert np.all(np.abs(variance - tau) <= 5 * tau * np.sqrt(2 / n_paths))
        mean = ensemble.increments.mean(axis=0)
        assert np.all(np.abs(mean) <= 5 * np.sqrt(tau / n_paths))

    @pytest.mark.parametrize(("n_paths", "seed"), [(0, 1), (10, -1)])
    def test_invalid_arguments(self, n_paths: int, seed: int) -> None:
        with pytest.raises(InvalidArgumentError):
            sample_ensemble(build_grid(1.0, 4), n_paths, seed)

    def test_no_weights(self) -> None:
        assert sample_ensemble(build_grid(1.0, 2), 3, seed=0).weights is None


class TestCoarsen:
    def test_sums_pairs(self) -> None:
        ensemble = sample_ensemble(build_grid(1.0, 4), 3, seed=5)
        coarse = coarsen(ensemble, 2)
        a, b, c, d = ensemble.increments.T
        expected = np.stack([a + b, c + d], axis=1)
        np.testing.assert_array_equal(coarse.increments, expected)
        assert coarse.grid.N == 2

    def test_factor_one_is_identity(self) -> None:
        ensemble = sample_ensemble(build_grid(1.0, 4), 3, seed=5)
        assert np.array_equal(coarsen(ensemble, 1).increments, ensemble.increments)

    def test_composes_bitwise(self) -> None:
        ensemble = sample_ensemble(build_grid(1.0, 64), 20, seed=9)
        twice = coarsen(coarsen(ensemble, 2), 4)
        once = coarsen(ensemble, 8)
        assert np.array_equal(twice.increments, once.increments)

    def test_coarse_variance(self) -> None:
        n_paths = 100_000
        ensemble = sample_ensemble(build_grid(1.0, 8), n_paths, seed=4)
        coarse = coarsen(ensemble, 4)
        tau = coarse.grid.tau
        variance = coarse.increments.var(axis=0)
        assert np.all(np.abs(variance - tau) <= 5 * tau * np.sqrt(2 / n_paths))

    def test_factor_must_divide(self) -> None:
        with pytest.raises(InvalidArgumentError):
            coarsen(sample_ensemble(build_grid(1.0, 6), 2, seed=0), 4)


class TestBernoulliTree:
    def test_single_step(self) -> None:
        tree = enumerate_tree(build_grid(1.0, 1))
        np.testing.assert_allclose(tree.increments[:, 0], [1.0, -1.0])
        np.testing.assert_allclose(tree.weights, [0.5, 0.5])

    def test_three_steps(self) -> None:
        grid = build_grid(1.0, 3)
        tree = enumerate_tree(grid)
        assert tree.n_paths == 8
        assert tree.weights.sum() == 1.0
        root = np.sqrt(grid.tau)
        np.testing.assert_allclose(tree.increments[0], [root, root, root])
        np.testing.assert_allclose(tree.increments[-1], [-root, -root, -root])
        np.testing.assert_allclose(tree.increments[1], [root, root, -root])

    def test_increment_moments_are_exact(self) -> None:
        grid = build_grid(1.0, 4)
        tree = enumerate_tree(grid)
        second = tree.increments.T @ (tree.weights[:, None] * tree.increments)
        np.testing.assert_allclose(second, grid.tau * np.eye(4), atol=1e-15)
        np.testing.assert_allclose(tree.weights @ tree.increments, 0.0, atol=1e-15)

    def test_conditional_expectation(self) -> None:
        tree = enumerate_tree(build_grid(1.0, 3))
        values = np.arange(8.0)
        np.testing.assert_allclose(tree.conditional_expectation(values, 3), values)
        np.testing.assert_allclose(tree.conditional_expectation(values, 0), 3.5)
        np.testing.assert_allclose(
            tree.conditional_expectation(values, 1), [1.5] * 4 + [5.5] * 4
        )

    def test_conditional_expectation_of_fields(self) -> None:
        tree = enumerate_tree(build_grid(1.0, 2))
        values = np.arange(8.0).reshape(4, 2)
        np.testing.assert_allclose(
            tree.conditional_expectation(values, 1), [[1, 2], [1, 2], [5, 6], [5, 6]]
        )

    @pytest.mark.parametrize("n", [0, 1, 2, 4])
    def test_conditional_expectation_is_the_best_approximation(self, n: int) -> None:
        """E[phi | F_n] is closer to phi than any F_n-measurable xi."""
        N, dim = 4, 3
        tree = enumerate_tree(build_grid(1.0, N))
        rng = np.random.default_rng(n)
        phi = rng.standard_normal((tree.n_paths, dim))
        best = tree.conditional_expectation(phi, n)
        best_error = tree.weights @ ((phi - best) ** 2).sum(axis=1)
        for _ in range(100):
            blocks = rng.standard_normal((2**n, dim))
            xi = best + 0.1 * np.repeat(blocks, 2 ** (N - n), axis=0)
            error = tree.weights @ ((phi - xi) ** 2).sum(axis=1)
            assert best_error <= error + 1e-12

    def test_too_many_steps(self) -> None:
        with pytest.raises(ResourceLimitError):
            enumerate_tree(build_grid(1.0, 13))

"""Time grids, reproducible Brownian increments and the Bernoulli increment tree."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numpy.typing import NDArray
from scipy.special import ndtri

from slq_heat._constants import MAX_TREE_STEPS
from slq_heat._errors import InvalidArgumentError, ResourceLimitError

logger = logging.getLogger("slq_heat")

_UNIFORM_BITS = 52


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = n * tau, n = 0..N, on [0, T]."""

    T: float
    N: int

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> NDArray[np.float64]:
        return np.linspace(0.0, self.T, self.N + 1)

    def refined(self, factor: int) -> TimeGrid:
        return TimeGrid(self.T, self.N * factor)

    def refinement_factor(self, coarse: TimeGrid) -> int:
        if not np.isclose(self.T, coarse.T) or self.N % coarse.N:
            raise InvalidArgumentError(
                f"grid with N={self.N} does not refine grid with N={coarse.N}"
            )
        return self.N // coarse.N


def build_grid(T: float, N: int) -> TimeGrid:
    if not T > 0:
        raise InvalidArgumentError(f"horizon T must be positive, got {T}")
    if N < 1:
        raise InvalidArgumentError(f"N must be at least 1, got {N}")
    if T / N > 1.0:
        raise InvalidArgumentError(f"tau = {T / N} exceeds 1")
    return TimeGrid(float(T), int(N))


class IncrementSource(Protocol):
    """Anything that carries increments shaped (n_paths, N) on a grid."""

    @property
    def grid(self) -> TimeGrid: ...

    @property
    def increments(self) -> NDArray[np.float64]: ...

    @property
    def weights(self) -> NDArray[np.float64] | None: ...


@dataclass(frozen=True, eq=False)
class NoiseEnsemble:
    """Brownian increments, one row per path, drawn from a counter-based stream."""

    grid: TimeGrid
    master_seed: int
    increments: NDArray[np.float64]

    @property
    def n_paths(self) -> int:
        return int(self.increments.shape[0])

    @property
    def weights(self) -> None:
        return None


def _path_increments(seed: int, path: int, grid: TimeGrid) -> NDArray[np.float64]:
    # path index occupies its own counter word, so streams never overlap
    bit_generator = np.random.Philox(key=seed, counter=[0, 0, path, 0])
    raw = bit_generator.random_raw(grid.N)
    top_bits = (raw >> (64 - _UNIFORM_BITS)).astype(np.float64)
    uniforms = (top_bits + 0.5) * 2.0**-_UNIFORM_BITS
    return ndtri(uniforms) * np.sqrt(grid.tau)


def sample_ensemble(
    grid: TimeGrid, n_paths: int, seed: int, threads: int = 1
) -> NoiseEnsemble:
    """Draw ``n_paths`` increment paths; path p depends only on (seed, p)."""
    if n_paths < 1:
        raise InvalidArgumentError(f"n_paths must be at least 1, got {n_paths}")
    if seed < 0:
        raise InvalidArgumentError(f"seed must be non-negative, got {seed}")

    def draw(path: int) -> NDArray[np.float64]:
        return _path_increments(seed, path, grid)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(draw, range(n_paths)))
    else:
        rows = [draw(path) for path in range(n_paths)]
    logger.debug("Sampled %d paths with N=%d", n_paths, grid.N)
    return NoiseEnsemble(grid, seed, np.vstack(rows))


def _prime_factors(value: int) -> list[int]:
    factors = []
    candidate = 2
    while value > 1:
        while value % candidate == 0:
            factors.append(candidate)
            value //= candidate
        candidate += 1
    return factors


def _sum_groups(increments: NDArray[np.float64], size: int) -> NDArray[np.float64]:
    summed = increments[:, 0::size].copy()
    for offset in range(1, size):
        summed += increments[:, offset::size]
    return summed


def coarsen(ensemble: NoiseEnsemble, factor: int) -> NoiseEnsemble:
    """Sum consecutive groups of ``factor`` increments.

    Factors are applied prime by prime in ascending order, so coarsening by
    a then by b gives bitwise the same increments as coarsening by a * b.
    """
    if factor < 1 or ensemble.grid.N % factor:
        raise InvalidArgumentError(
            f"factor {factor} does not divide N={ensemble.grid.N}"
        )
    increments = ensemble.increments
    for prime in _prime_factors(factor):
        increments = _sum_groups(increments, prime)
    grid = TimeGrid(ensemble.grid.T, ensemble.grid.N // factor)
    return NoiseEnsemble(grid, ensemble.master_seed, increments)


@dataclass(frozen=True, eq=False)
class BernoulliTree:
    """All 2^N sign paths with increments +-sqrt(tau), in lexicographic order.

    The first increment is the most significant bit, so paths sharing their
    first n increments form a contiguous block of 2^(N - n) rows.
    """

    grid: TimeGrid
    increments: NDArray[np.float64]
    weights: NDArray[np.float64]

    @property
    def n_paths(self) -> int:
        return int(self.increments.shape[0])

    def conditional_expectation(
        self, values: NDArray[np.float64], n: int
    ) -> NDArray[np.float64]:
        """E[values | F_n] with rows indexed by tree path."""
        if not 0 <= n <= self.grid.N:
            raise InvalidArgumentError(f"n={n} outside 0..{self.grid.N}")
        block = 2 ** (self.grid.N - n)
        shaped = values.reshape(2**n, block, *values.shape[1:])
        return np.repeat(shaped.mean(axis=1), block, axis=0)


def enumerate_tree(grid: TimeGrid) -> BernoulliTree:
    if grid.N > MAX_TREE_STEPS:
        raise ResourceLimitError(
            f"a tree with N={grid.N} steps exceeds the limit of {MAX_TREE_STEPS}"
        )
    paths = np.arange(2**grid.N)[:, None]
    shifts = np.arange(grid.N - 1, -1, -1)[None, :]
    bits = (paths >> shifts) & 1
    increments = np.where(bits == 0, 1.0, -1.0) * np.sqrt(grid.tau)
    weights = np.full(2**grid.N, 2.0**-grid.N)
    return BernoulliTree(grid, increments, weights)

"""Adapted discrete processes: exact chaos-affine form and pathwise samples.

A chaos-affine process stores, for every time index n, a deterministic mean
and one deterministic loading per past increment dW_1..dW_n. Loadings are
kept ragged (``loadings[n]`` has n rows), so a loading on a future increment
cannot be expressed at all.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from slq_heat._errors import InvalidArgumentError
from slq_heat._noise import TimeGrid

LinearMap = Callable[[NDArray[np.float64]], NDArray[np.float64]]
Weight = sp.spmatrix | NDArray[np.float64]


def _weighted_inner(
    weight: Weight, left: NDArray[np.float64], right: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Row-wise u^T W v along the last axis."""
    weighted = np.asarray((weight @ right.reshape(-1, right.shape[-1]).T).T)
    return np.einsum("...i,...i->...", left, weighted.reshape(right.shape))


@dataclass(frozen=True, eq=False)
class ChaosValue:
    """One random field m + sum_j L_j dW_j with j = 1..k."""

    mean: NDArray[np.float64]
    loadings: NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.loadings.ndim != 2 or self.loadings.shape[1] != self.mean.shape[-1]:
            raise InvalidArgumentError(
                f"loadings {self.loadings.shape} do not match mean {self.mean.shape}"
            )

    @classmethod
    def deterministic(cls, mean: NDArray[np.float64]) -> ChaosValue:
        mean = np.asarray(mean, dtype=np.float64)
        return cls(mean, np.zeros((0, mean.size)))

    @property
    def depth(self) -> int:
        """Number of increments the value depends on."""
        return int(self.loadings.shape[0])

    def padded(self, depth: int) -> NDArray[np.float64]:
        if self.depth > depth:
            raise InvalidArgumentError(
                f"value depends on {self.depth} increments, only {depth} allowed"
            )
        out = np.zeros((depth, self.mean.size))
        out[: self.depth] = self.loadings
        return out

    def conditional(self, n: int) -> ChaosValue:
        """E[. | F_n]: drop the loadings on increments after n."""
        return ChaosValue(self.mean, self.padded(max(self.depth, n))[:n])

    def loading(self, j: int) -> NDArray[np.float64]:
        """Loading on dW_{j+1}, zero when absent."""
        if j < self.depth:
            return self.loadings[j]
        return np.zeros_like(self.mean)

    def evaluate(self, increments: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.mean + increments[:, : self.depth] @ self.loadings


@dataclass(frozen=True, eq=False)
class ChaosAffineProcess:
    """Adapted process X_n = mean_n + sum_{j<=n} L_{n,j} dW_j, n = 0..n_times-1."""

    grid: TimeGrid
    mean: NDArray[np.float64]
    loadings: tuple[NDArray[np.float64], ...]

    def __post_init__(self) -> None:
        n_times, dim = self.mean.shape
        if n_times > self.grid.N + 1:
            raise InvalidArgumentError(
                f"{n_times} time levels do not fit a grid with N={self.grid.N}"
            )
        if len(self.loadings) != n_times:
            raise InvalidArgumentError("one loading block per time level is required")
        for n, block in enumerate(self.loadings):
            if block.shape != (n, dim):
                raise InvalidArgumentError(
                    f"loadings at level {n} have shape {block.shape}, "
                    f"expected {(n, dim)}"
                )

    @classmethod
    def from_values(
        cls, grid: TimeGrid, values: Sequence[ChaosValue]
    ) -> ChaosAffineProcess:
        mean = np.vstack([value.mean for value in values])
        loadings = tuple(value.padded(n) for n, value in enumerate(values))
        return cls(grid, mean, loadings)

    @classmethod
    def zeros(cls, grid: TimeGrid, n_times: int, dim: int) -> ChaosAffineProcess:
        return cls(
            grid,
            np.zeros((n_times, dim)),
            tuple(np.zeros((n, dim)) for n in range(n_times)),
        )

    @classmethod
    def deterministic(
        cls, grid: TimeGrid, mean: NDArray[np.float64]
    ) -> ChaosAffineProcess:
        mean = np.atleast_2d(np.asarray(mean, dtype=np.float64))
        dim = mean.shape[1]
        return cls(grid, mean, tuple(np.zeros((n, dim)) for n in range(mean.shape[0])))

    @property
    def n_times(self) -> int:
        return int(self.mean.shape[0])

    @property
    def dim(self) -> int:
        return int(self.mean.shape[1])

    def at(self, n: int) -> ChaosValue:
        return ChaosValue(self.mean[n], self.loadings[n])

    def _check_compatible(self, other: ChaosAffineProcess) -> None:
        if (
            other.grid.N != self.grid.N
            or not np.isclose(other.grid.T, self.grid.T)
            or other.mean.shape != self.mean.shape
        ):
            raise InvalidArgumentError("processes live on different grids or spaces")

    def __add__(self, other: ChaosAffineProcess) -> ChaosAffineProcess:
        self._check_compatible(other)
        return ChaosAffineProcess(
            self.grid,
            self.mean + other.mean,
            tuple(a + b for a, b in zip(self.loadings, other.loadings, strict=True)),
        )

    def __sub__(self, other: ChaosAffineProcess) -> ChaosAffineProcess:
        return self + other.scale(-1.0)

    def scale(self, factor: float) -> ChaosAffineProcess:
        return ChaosAffineProcess(
            self.grid, factor * self.mean, tuple(factor * L for L in self.loadings)
        )

    def map_linear(self, operator: LinearMap) -> ChaosAffineProcess:
        """Apply a linear map along the field axis at every level."""
        mean = operator(self.mean)
        dim = mean.shape[1]
        loadings = tuple(
            operator(block) if block.shape[0] else np.zeros((0, dim))
            for block in self.loadings
        )
        return ChaosAffineProcess(self.grid, mean, loadings)

    def evaluate(self, increments: NDArray[np.float64]) -> NDArray[np.float64]:
        """Pathwise values, shaped (n_paths, n_times, dim)."""
        if increments.shape[1] != self.grid.N:
            raise InvalidArgumentError(
                f"increments have {increments.shape[1]} steps, grid has {self.grid.N}"
            )
        out = np.empty((increments.shape[0], self.n_times, self.dim))
        for n in range(self.n_times):
            out[:, n] = self.mean[n] + increments[:, :n] @ self.loadings[n]
        return out

    def inner(
        self,
        other: ChaosAffineProcess,
        weight: Weight,
        indices: Sequence[int] | None = None,
    ) -> NDArray[np.float64]:
        """E[(X_n, Y_n)_W] per level, using E[dW_i dW_j] = tau delta_ij."""
        self._check_compatible(other)
        levels = range(self.n_times) if indices is None else indices
        out = []
        for n in levels:
            value = _weighted_inner(weight, self.mean[n], other.mean[n])
            if n:
                value = value + self.grid.tau * _weighted_inner(
                    weight, self.loadings[n], other.loadings[n]
                ).sum()
            out.append(float(value))
        return np.asarray(out)

    def second_moments(
        self, weight: Weight, indices: Sequence[int] | None = None
    ) -> NDArray[np.float64]:
        return self.inner(self, weight, indices)

    def head(self, n_times: int) -> ChaosAffineProcess:
        """The first ``n_times`` levels."""
        return ChaosAffineProcess(
            self.grid, self.mean[:n_times], self.loadings[:n_times]
        )

    def refine_time(self, factor: int) -> ChaosAffineProcess:
        """Express the process on a grid with ``factor`` times more steps.

        A coarse increment is the sum of its fine sub-increments, so each coarse
        loading is repeated over them. Between coarse levels the value is held
        constant, which keeps it adapted.
        """
        if factor < 1:
            raise InvalidArgumentError(
                f"refinement factor must be positive, got {factor}"
            )
        fine = self.grid.refined(factor)
        n_fine = min(self.n_times * factor, fine.N + 1)
        mean = np.repeat(self.mean, factor, axis=0)[:n_fine]
        loadings = []
        for k in range(n_fine):
            coarse = self.loadings[k // factor]
            block = np.zeros((k, self.dim))
            repeated = np.repeat(coarse, factor, axis=0)
            block[: repeated.shape[0]] = repeated
            loadings.append(block)
        return ChaosAffineProcess(fine, mean, tuple(loadings))


@dataclass(frozen=True, eq=False)
class PathProcess:
    """Pathwise values (n_paths, n_times, dim), optionally with path weights."""

    grid: TimeGrid
    values: NDArray[np.float64]
    weights: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        if self.values.ndim != 3:
            raise InvalidArgumentError("path values must be shaped (paths, times, dim)")
        if self.weights is not None and self.weights.shape != (self.values.shape[0],):
            raise InvalidArgumentError("one weight per path is required")

    @property
    def n_paths(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_times(self) -> int:
        return int(self.values.shape[1])

    @property
    def dim(self) -> int:
        return int(self.values.shape[2])

    def at(self, n: int) -> NDArray[np.float64]:
        return self.values[:, n]

    def expectation(self, samples: NDArray[np.float64]) -> tuple[float, float]:
        """Weighted mean of per-path samples and its standard error.

        Exact weights (a full tree) carry no sampling error.
        """
        if self.weights is not None:
            return float(self.weights @ samples), 0.0
        if samples.size < 2:
            return float(samples.mean()), float("nan")
        return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(samples.size))

    def squared_norms(self, weight: Weight) -> NDArray[np.float64]:
        """Per-path, per-level ||X_n||_W^2, shaped (n_paths, n_times)."""
        return _weighted_inner(weight, self.values, self.values)

    def second_moments(self, weight: Weight) -> NDArray[np.float64]:
        norms = self.squared_norms(weight)
        return np.asarray(
            [self.expectation(norms[:, n])[0] for n in range(self.n_times)]
        )

    def __sub__(self, other: PathProcess) -> PathProcess:
        if other.values.shape != self.values.shape:
            raise InvalidArgumentError("path processes have different shapes")
        return PathProcess(self.grid, self.values - other.values, self.weights)

    def map_linear(self, operator: LinearMap) -> PathProcess:
        return PathProcess(self.grid, operator(self.values), self.weights)

    def head(self, n_times: int) -> PathProcess:
        return PathProcess(self.grid, self.values[:, :n_times], self.weights)

"""P1/P0 finite elements on a 1D mesh: assembly, resolvent, projections, norms."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from slq_heat._constants import GAUSS_POINTS, MIN_MESH_CELLS
from slq_heat._errors import InternalError, InvalidArgumentError, InvalidStateError

logger = logging.getLogger("slq_heat")

# Interior nodal coefficients (zero trace at both boundary nodes).
FieldP1 = NDArray[np.float64]
# One constant per cell.
FieldP0 = NDArray[np.float64]
SpaceFunction = Callable[[NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Partition of (0, domain_length) into cells."""

    domain_length: float
    node_coords: NDArray[np.float64]

    def __post_init__(self) -> None:
        nodes = self.node_coords
        if nodes.ndim != 1 or nodes.size < MIN_MESH_CELLS + 1:
            raise InvalidArgumentError("a mesh needs at least two cells")
        if not np.all(np.diff(nodes) > 0):
            raise InvalidArgumentError("node coordinates must be strictly increasing")
        if nodes[0] != 0.0 or not np.isclose(nodes[-1], self.domain_length):
            raise InvalidArgumentError("nodes must span the whole interval")

    @property
    def n_cells(self) -> int:
        return int(self.node_coords.size - 1)

    @property
    def n_dof(self) -> int:
        return self.n_cells - 1

    @property
    def cell_widths(self) -> NDArray[np.float64]:
        return np.diff(self.node_coords)

    @property
    def h(self) -> float:
        return float(self.cell_widths.max())

    def refinement_factor(self, coarse: Mesh1D) -> int:
        """Return r such that this mesh splits every cell of ``coarse`` into r cells."""
        if not np.isclose(self.domain_length, coarse.domain_length):
            raise InvalidArgumentError("meshes cover different intervals")
        if self.n_cells % coarse.n_cells:
            raise InvalidArgumentError(
                f"{self.n_cells} cells do not refine {coarse.n_cells} cells"
            )
        factor = self.n_cells // coarse.n_cells
        if not np.allclose(self.node_coords[::factor], coarse.node_coords):
            raise InvalidArgumentError("meshes are not nested")
        return factor


def build_mesh(length: float, n_cells: int) -> Mesh1D:
    """Uniform mesh of (0, length) with ``n_cells`` cells."""
    if not length > 0:
        raise InvalidArgumentError(f"domain length must be positive, got {length}")
    if n_cells < MIN_MESH_CELLS:
        raise InvalidArgumentError(
            f"n_cells must be at least {MIN_MESH_CELLS}, got {n_cells}"
        )
    return Mesh1D(float(length), np.linspace(0.0, float(length), n_cells + 1))


def _as_rows(values: NDArray[np.float64], size: int, what: str) -> NDArray[np.float64]:
    array = np.asarray(values, dtype=np.float64)
    if array.shape[-1:] != (size,):
        raise InvalidArgumentError(
            f"{what} has trailing dimension {array.shape[-1:]}, expected {size}"
        )
    return array.reshape(-1, size)


def _apply_sparse(
    matrix: sp.csr_matrix, values: NDArray[np.float64], what: str
) -> NDArray[np.float64]:
    """Apply ``matrix`` along the last axis of ``values``."""
    n_out, n_in = matrix.shape
    rows = _as_rows(values, n_in, what)
    out = np.asarray((matrix @ rows.T).T)
    return out.reshape(*np.shape(values)[:-1], n_out)


def _solve_factor(
    factor: NDArray[np.float64], rhs: NDArray[np.float64], what: str
) -> NDArray[np.float64]:
    """Banded Cholesky solve along the last axis of ``rhs``."""
    size = factor.shape[1]
    rows = _as_rows(rhs, size, what)
    out = cho_solve_banded((factor, False), rows.T, check_finite=False).T
    return np.ascontiguousarray(out).reshape(np.shape(rhs))


def _banded_upper(matrix: sp.csr_matrix) -> NDArray[np.float64]:
    size = matrix.shape[0]
    band = np.zeros((2, size))
    band[1] = matrix.diagonal()
    if size > 1:
        band[0, 1:] = matrix.diagonal(1)
    return band


def _factorize(matrix: sp.csr_matrix, what: str) -> NDArray[np.float64]:
    try:
        return cholesky_banded(_banded_upper(matrix), lower=False)
    except LinAlgError as exc:
        raise InternalError(f"{what} is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class FemOperators:
    """Dirichlet-reduced P1 mass/stiffness pair with a factorized resolvent."""

    mesh: Mesh1D
    tau: float
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    # Pi_h^1 of a P0 field is M^{-1} G c.
    load_p0: sp.csr_matrix
    # Pi_h^0 of a P1 field is D v (cell averages).
    average_p0: sp.csr_matrix
    resolvent_factor: NDArray[np.float64] = field(repr=False)
    mass_factor: NDArray[np.float64] = field(repr=False)

    @property
    def n_dof(self) -> int:
        return self.mesh.n_dof

    @property
    def n_cells(self) -> int:
        return self.mesh.n_cells

    @property
    def cell_mass(self) -> sp.csr_matrix:
        """L2 Gram matrix of the P0 space, diag(|K_k|)."""
        return sp.diags(self.mesh.cell_widths, format="csr")

    def check_tau(self, tau: float) -> None:
        if not np.isclose(tau, self.tau, rtol=1e-12, atol=0.0):
            raise InvalidStateError(
                f"operators were factorized for tau={self.tau}, grid uses tau={tau}"
            )

    def mass_apply(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return _apply_sparse(self.mass, values, "P1 field")

    def stiffness_apply(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return _apply_sparse(self.stiffness, values, "P1 field")

    def mass_solve(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        return _solve_factor(self.mass_factor, rhs, "P1 load vector")

    def resolvent_solve(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        """Solve (M + tau K) w = rhs."""
        return _solve_factor(self.resolvent_factor, rhs, "P1 load vector")

    def a0(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        """A_0 = (1 - tau Delta_h)^{-1} on nodal coefficients."""
        return self.resolvent_solve(self.mass_apply(values))

    def p0_load(self, cells: NDArray[np.float64]) -> NDArray[np.float64]:
        return _apply_sparse(self.load_p0, cells, "P0 field")

    def p0_to_p1(self, cells: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.mass_solve(self.p0_load(cells))

    def p1_to_p0(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return _apply_sparse(self.average_p0, values, "P1 field")

    def dense_a0(self) -> NDArray[np.float64]:
        return self.a0(np.eye(self.n_dof)).T

    def dense_coupling(self) -> NDArray[np.float64]:
        """B = Pi_h^1 o Pi_h^0 as an explicit matrix."""
        averaged = self.average_p0.toarray()
        return self.p0_to_p1(averaged.T).T


def assemble(mesh: Mesh1D, tau: float) -> FemOperators:
    """Assemble M, K from element matrices and factorize M and M + tau K."""
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    widths = mesh.cell_widths
    left, right = widths[:-1], widths[1:]
    mass = sp.diags(
        [right[:-1] / 6.0, (left + right) / 3.0, right[:-1] / 6.0],
        offsets=[-1, 0, 1],
        shape=(mesh.n_dof, mesh.n_dof),
        format="csr",
    )
    stiffness = sp.diags(
        [-1.0 / right[:-1], 1.0 / left + 1.0 / right, -1.0 / right[:-1]],
        offsets=[-1, 0, 1],
        shape=(mesh.n_dof, mesh.n_dof),
        format="csr",
    )
    # dof d sits between cells d and d + 1.
    average = sp.diags(
        [np.full(mesh.n_dof, 0.5), np.full(mesh.n_dof, 0.5)],
        offsets=[0, -1],
        shape=(mesh.n_cells, mesh.n_dof),
        format="csr",
    )
    load = (average.T @ sp.diags(widths)).tocsr()
    resolvent = (mass + tau * stiffness).tocsr()
    logger.debug("Assembled %d dof, tau=%g", mesh.n_dof, tau)
    return FemOperators(
        mesh=mesh,
        tau=float(tau),
        mass=mass,
        stiffness=stiffness,
        load_p0=load,
        average_p0=average,
        resolvent_factor=_factorize(resolvent, "M + tau K"),
        mass_factor=_factorize(mass, "M"),
    )


def apply_discrete_laplacian(ops: FemOperators, v: FieldP1) -> FieldP1:
    """Delta_h v, the solution w of M w = -K v."""
    return ops.mass_solve(-ops.stiffness_apply(v))


def apply_resolvent(ops: FemOperators, v: FieldP1, tau: float | None = None) -> FieldP1:
    """A_0 v, solving (M + tau K) w = M v."""
    if tau is not None:
        ops.check_tau(tau)
    return ops.a0(v)


def _gauss_points(mesh: Mesh1D) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Quadrature points and weights per cell, both shaped (n_cells, GAUSS_POINTS)."""
    ref_points, ref_weights = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    left = mesh.node_coords[:-1, None]
    half = 0.5 * mesh.cell_widths[:, None]
    return left + half * (ref_points + 1.0), half * ref_weights


def project_p1(ops: FemOperators, g: SpaceFunction) -> FieldP1:
    """L2 projection Pi_h^1 g."""
    mesh = ops.mesh
    points, weights = _gauss_points(mesh)
    values = np.asarray(g(points), dtype=np.float64) * weights
    rising = (points - mesh.node_coords[:-1, None]) / mesh.cell_widths[:, None]
    # cell k feeds dof k (its right node) and dof k - 1 (its left node)
    load = np.zeros(mesh.n_cells + 1)
    load[1:] += (values * rising).sum(axis=1)
    load[:-1] += (values * (1.0 - rising)).sum(axis=1)
    return ops.mass_solve(load[1:-1])


def project_p0(mesh: Mesh1D, v: FieldP1 | SpaceFunction) -> FieldP0:
    """Cell averages of a P1 field or of a function."""
    if callable(v):
        points, weights = _gauss_points(mesh)
        integrals = (np.asarray(v(points), dtype=np.float64) * weights).sum(axis=1)
        return integrals / mesh.cell_widths
    coeffs = np.asarray(v, dtype=np.float64)
    if coeffs.shape[-1:] != (mesh.n_dof,):
        raise InvalidArgumentError(
            f"P1 field has {coeffs.shape[-1:]} coefficients, mesh has {mesh.n_dof} dof"
        )
    padded = np.zeros((*coeffs.shape[:-1], mesh.n_dof + 2))
    padded[..., 1:-1] = coeffs
    return 0.5 * (padded[..., :-1] + padded[..., 1:])


@dataclass(frozen=True)
class Norms:
    l2: float
    h1_semi: float | None


def h1_seminorm(ops: FemOperators, v: FieldP1 | FieldP0) -> float:
    coeffs = np.asarray(v, dtype=np.float64)
    if coeffs.shape != (ops.n_dof,):
        raise InvalidArgumentError("the H1 seminorm is defined for P1 fields only")
    return float(np.sqrt(max(coeffs @ ops.stiffness_apply(coeffs), 0.0)))


def norms(
    ops: FemOperators,
    v: FieldP1 | FieldP0,
    space: Literal["p1", "p0"] | None = None,
) -> Norms:
    """L2 norm, plus the H1 seminorm for P1 fields."""
    coeffs = np.asarray(v, dtype=np.float64)
    if space is None:
        space = "p1" if coeffs.shape == (ops.n_dof,) else "p0"
    if space == "p0":
        if coeffs.shape != (ops.n_cells,):
            raise InvalidArgumentError(
                f"P0 field must have {ops.n_cells} entries, got {coeffs.shape}"
            )
        return Norms(float(np.sqrt(ops.mesh.cell_widths @ coeffs**2)), None)
    if coeffs.shape != (ops.n_dof,):
        raise InvalidArgumentError(
            f"P1 field must have {ops.n_dof} entries, got {coeffs.shape}"
        )
    l2 = float(np.sqrt(max(coeffs @ ops.mass_apply(coeffs), 0.0)))
    return Norms(l2, h1_seminorm(ops, coeffs))


def prolongation_matrix(coarse: Mesh1D, fine: Mesh1D) -> sp.csr_matrix:
    """Interpolation of interior P1 coefficients onto a nested finer mesh."""
    fine.refinement_factor(coarse)
    identity = np.eye(coarse.n_dof)
    padded = np.zeros((coarse.n_dof + 2, coarse.n_dof))
    padded[1:-1] = identity
    columns = [
        np.interp(fine.node_coords[1:-1], coarse.node_coords, padded[:, j])
        for j in range(coarse.n_dof)
    ]
    return sp.csr_matrix(np.column_stack(columns))


def p0_prolongation_matrix(coarse: Mesh1D, fine: Mesh1D) -> sp.csr_matrix:
    factor = fine.refinement_factor(coarse)
    return sp.csr_matrix(np.repeat(np.eye(coarse.n_cells), factor, axis=0))


def prolongate(coarse: FemOperators, fine: FemOperators, v: FieldP1) -> FieldP1:
    """Exact embedding of a coarse P1 field into the nested fine space."""
    matrix = prolongation_matrix(coarse.mesh, fine.mesh)
    return _apply_sparse(matrix, v, "coarse P1 field")


def prolongate_p0(coarse: Mesh1D, fine: Mesh1D, c: FieldP0) -> FieldP0:
    """Exact embedding of a coarse P0 field into the nested fine space."""
    return _apply_sparse(p0_prolongation_matrix(coarse, fine), c, "coarse P0 field")

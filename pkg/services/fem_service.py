"""
P1 finite element truth solver for

    -div(D grad u) + mu_a u = 0 in Omega,    D du/dn = f on the boundary,

with D and mu_a constant on each region, assembled as four parameter
independent blocks:

    A_lambda = D_0 A00 + mu_a^0 A01 + D_1 A10 + mu_a^1 A11.
"""
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from services.mesh_service import TriMesh, nearest_boundary_vertex
from utils.errors import AssemblyError, SolverError

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-10
# Reference P1 mass matrix on a triangle of unit area
UNIT_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0
GAUSS_2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


@dataclass(frozen=True)
class SourceSpec:
    """Boundary source f(x) = amplitude * exp(-|x - center|^2 / width)."""
    amplitude: float = 15.0
    center: Tuple[float, float] = (-24.5196, -4.8773)
    width: float = 10.0

    def __post_init__(self):
        if self.amplitude < 0 or self.width <= 0:
            raise ValueError(f"source needs amplitude >= 0 and width > 0, got {self.amplitude}, {self.width}")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        offset = np.asarray(points, dtype=float) - np.asarray(self.center, dtype=float)
        return self.amplitude * np.exp(-np.sum(offset ** 2, axis=-1) / self.width)

    def snapped(self, mesh: TriMesh) -> "SourceSpec":
        """Copy of this source centred on the nearest boundary vertex of `mesh`."""
        vertex = nearest_boundary_vertex(mesh, self.center)
        return SourceSpec(self.amplitude, tuple(float(v) for v in mesh.vertices[vertex]), self.width)


@dataclass(eq=False)
class AffineBlocks:
    """
    Parameter independent FE matrices and load.

    Attributes:
        A00, A10: stiffness restricted to region 0 / region 1
        A01, A11: mass restricted to region 0 / region 1
        F: boundary load vector (zeros until a source is attached)
        X_gram: H1 Gram matrix, full stiffness + full mass
    """
    A00: sps.csc_matrix
    A01: sps.csc_matrix
    A10: sps.csc_matrix
    A11: sps.csc_matrix
    F: np.ndarray
    X_gram: sps.csc_matrix
    _gram_factor: Optional[object] = field(default=None, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    @property
    def blocks(self) -> Tuple[sps.csc_matrix, ...]:
        return (self.A00, self.A01, self.A10, self.A11)

    @property
    def size(self) -> int:
        return self.X_gram.shape[0]

    def with_load(self, load: np.ndarray) -> "AffineBlocks":
        """Same matrices with a different load vector."""
        load = np.asarray(load, dtype=float)
        if load.shape != (self.size,):
            raise ValueError(f"load has shape {load.shape}, expected ({self.size},)")
        return AffineBlocks(self.A00, self.A01, self.A10, self.A11, load, self.X_gram)

    def combine(self, theta: Sequence[float]) -> sps.csc_matrix:
        """Theta-weighted block sum A_lambda."""
        return (theta[0] * self.A00 + theta[1] * self.A01 + theta[2] * self.A10 + theta[3] * self.A11).tocsc()

    def riesz(self, residual: np.ndarray) -> np.ndarray:
        """Solve X_gram z = residual with the cached factorization (columns allowed)."""
        with self._lock:
            if self._gram_factor is None:
                self._gram_factor = splu(self.X_gram)
            return self._gram_factor.solve(np.asarray(residual, dtype=float))


def _element_geometry(mesh: TriMesh) -> Tuple[np.ndarray, np.ndarray]:
    """Areas and constant P1 gradients per triangle, shape (T,) and (T, 3, 2)."""
    corners = mesh.vertices[mesh.triangles]
    areas = mesh.signed_areas
    degenerate = np.flatnonzero(areas <= 0)
    if degenerate.size:
        element = int(degenerate[0])
        raise AssemblyError(
            f"degenerate element {element} (vertices {mesh.triangles[element].tolist()}, area {areas[element]:.3e})"
        )
    # grad phi_k = rot90(edge opposite vertex k) / (2 area)
    opposite = np.roll(corners, -2, axis=1) - np.roll(corners, -1, axis=1)
    gradients = np.stack((-opposite[..., 1], opposite[..., 0]), axis=-1) / (2.0 * areas[:, None, None])
    return areas, gradients


def _local_matrices(mesh: TriMesh) -> Tuple[np.ndarray, np.ndarray]:
    areas, gradients = _element_geometry(mesh)
    stiffness = areas[:, None, None] * np.einsum("tid,tjd->tij", gradients, gradients)
    mass = areas[:, None, None] * UNIT_MASS[None, :, :]
    return stiffness, mass


def _scatter(mesh: TriMesh, local: np.ndarray, weights: np.ndarray) -> sps.csc_matrix:
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    values = (weights[:, None, None] * local).ravel()
    n = mesh.n_vertices
    return sps.coo_matrix((values, (rows, cols)), shape=(n, n)).tocsc()


def assemble_affine_blocks(mesh: TriMesh) -> AffineBlocks:
    """
    Assemble the four region blocks and the H1 Gram matrix (load left at zero).

    Raises:
        AssemblyError: If a triangle has zero or negative area
    """
    stiffness, mass = _local_matrices(mesh)
    in_region_0 = (mesh.region == 0).astype(float)
    in_region_1 = (mesh.region == 1).astype(float)
    everywhere = np.ones(mesh.n_triangles)

    blocks = AffineBlocks(
        A00=_scatter(mesh, stiffness, in_region_0),
        A01=_scatter(mesh, mass, in_region_0),
        A10=_scatter(mesh, stiffness, in_region_1),
        A11=_scatter(mesh, mass, in_region_1),
        F=np.zeros(mesh.n_vertices),
        X_gram=(_scatter(mesh, stiffness, everywhere) + _scatter(mesh, mass, everywhere)).tocsc(),
    )
    logger.debug(f"Assembled affine blocks for {mesh.n_vertices} unknowns")
    return blocks


def assemble_boundary_load(mesh: TriMesh, flux: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """F_i = integral over the boundary of flux * phi_i, two-point Gauss per edge."""
    load = np.zeros(mesh.n_vertices)
    start = mesh.vertices[mesh.boundary_edges[:, 0]]
    end = mesh.vertices[mesh.boundary_edges[:, 1]]
    lengths = np.linalg.norm(end - start, axis=1)
    for s in GAUSS_2:
        values = flux(start + s * (end - start)) * lengths * 0.5
        np.add.at(load, mesh.boundary_edges[:, 0], values * (1.0 - s))
        np.add.at(load, mesh.boundary_edges[:, 1], values * s)
    return load


def assemble_load(mesh: TriMesh, source: SourceSpec) -> np.ndarray:
    """
    Neumann load of the Gaussian boundary source, centred on the nearest boundary vertex.
    """
    return assemble_boundary_load(mesh, source.snapped(mesh))


def assemble_forcing(mesh: TriMesh, forcing: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Interior load integral of forcing * phi_i, edge-midpoint rule (exact for quadratics)."""
    areas, _ = _element_geometry(mesh)
    corners = mesh.vertices[mesh.triangles]
    load = np.zeros(mesh.n_vertices)
    # Midpoint of edge (k, k+1) carries weight 1/2 for phi_k and phi_{k+1}
    for k in range(3):
        a, b = k, (k + 1) % 3
        values = forcing(0.5 * (corners[:, a] + corners[:, b])) * areas / 3.0
        np.add.at(load, mesh.triangles[:, a], 0.5 * values)
        np.add.at(load, mesh.triangles[:, b], 0.5 * values)
    return load


def build_problem(mesh: TriMesh, source: SourceSpec) -> AffineBlocks:
    """Blocks plus the source load, the offline stage of the sample problem."""
    return assemble_affine_blocks(mesh).with_load(assemble_load(mesh, source))


@dataclass(frozen=True)
class TruthSolution:
    coefficients: np.ndarray
    wavelength: float


def solve_system(blocks: AffineBlocks, theta: Sequence[float], load: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Solve A_lambda c = load by sparse LU; load defaults to blocks.F.

    Raises:
        SolverError: If a coefficient is not positive, the factorization fails
            or the residual bound is not met
    """
    if any(not np.isfinite(q) or q <= 0 for q in theta):
        raise SolverError(f"theta must be componentwise positive for an SPD system, got {tuple(theta)}")
    rhs = blocks.F if load is None else np.asarray(load, dtype=float)
    matrix = blocks.combine(theta)
    try:
        coefficients = splu(matrix).solve(rhs)
    except RuntimeError as e:
        raise SolverError(f"sparse factorization failed: {e}")

    if not np.all(np.isfinite(coefficients)):
        raise SolverError("truth solve produced non-finite coefficients")
    residual = np.linalg.norm(matrix @ coefficients - rhs)
    scale = np.linalg.norm(rhs)
    if residual > RESIDUAL_TOLERANCE * scale:
        raise SolverError(f"residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE:g} * |F| = {scale:.3e}")
    return coefficients


def solve_truth(blocks: AffineBlocks, theta: Sequence[float], wavelength: float = float("nan")) -> TruthSolution:
    """Truth (full FE) solution for one coefficient tuple."""
    return TruthSolution(coefficients=solve_system(blocks, theta), wavelength=wavelength)


def h1_inner(blocks: AffineBlocks, u: np.ndarray, v: np.ndarray) -> float:
    """u^T X v in the H1 Gram matrix."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (blocks.size,) or v.shape != (blocks.size,):
        raise ValueError(f"vectors must have shape ({blocks.size},), got {u.shape} and {v.shape}")
    return float(u @ (blocks.X_gram @ v))


def h1_norm(blocks: AffineBlocks, u: np.ndarray) -> float:
    return float(np.sqrt(max(h1_inner(blocks, u, u), 0.0)))


def h1_norms(blocks: AffineBlocks, columns: np.ndarray) -> np.ndarray:
    """H1 norm of every column of an (N_dof, k) array."""
    columns = np.asarray(columns, dtype=float)
    squared = np.einsum("ij,ij->j", columns, blocks.X_gram @ columns)
    return np.sqrt(np.maximum(squared, 0.0))


def assemble_direct(mesh: TriMesh, theta: Sequence[float]) -> sps.csc_matrix:
    """
    Assemble A_lambda element by element with the coefficient of each
    element's region; an independent path to check the affine split.
    """
    stiffness, mass = _local_matrices(mesh)
    diffusion = np.where(mesh.region == 0, theta[0], theta[2])
    absorption = np.where(mesh.region == 0, theta[1], theta[3])
    local = diffusion[:, None, None] * stiffness + absorption[:, None, None] * mass
    return _scatter(mesh, local, np.ones(mesh.n_triangles))


def h1_error(mesh: TriMesh, coefficients: np.ndarray,
             exact: Callable[[np.ndarray], np.ndarray],
             exact_gradient: Callable[[np.ndarray], np.ndarray]) -> float:
    """
    H1 error between a P1 field and a known function, with the edge-midpoint
    rule on every triangle (exact for quadratic integrands).
    """
    areas, gradients = _element_geometry(mesh)
    corners = mesh.vertices[mesh.triangles]
    nodal = np.asarray(coefficients, dtype=float)[mesh.triangles]
    discrete_gradient = np.einsum("tk,tkd->td", nodal, gradients)

    total = np.zeros(mesh.n_triangles)
    for k in range(3):
        a, b = k, (k + 1) % 3
        point = 0.5 * (corners[:, a] + corners[:, b])
        value = 0.5 * (nodal[:, a] + nodal[:, b])
        value_error = exact(point) - value
        gradient_error = exact_gradient(point) - discrete_gradient
        total += (value_error ** 2 + np.sum(gradient_error ** 2, axis=1)) * areas / 3.0
    return float(np.sqrt(total.sum()))

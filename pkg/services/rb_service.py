"""
Reduced basis engine: snapshot management, Gram-Schmidt orthogonalization,
projected affine blocks, online solves and error measures.

A ReducedBasis is immutable; add_snapshot returns a new basis so trial
augmentations (gradient and Metropolis objectives) never disturb the
caller's basis.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sps

from services.fem_service import AffineBlocks, h1_norms, solve_system
from services.optics_service import CoefficientModel, theta, theta_matrix
from utils.errors import ConditioningError, DuplicateSnapshotError, SnapshotDependenceError

logger = logging.getLogger(__name__)

DEFAULT_REFERENCE_LAMBDA = 800.0
DUPLICATE_TOLERANCE = 1e-9
DEPENDENCE_RATIO = 1e-10
MAX_CONDITION = 1.0 / np.finfo(float).eps


@dataclass(frozen=True)
class TruthCache:
    """Truth solutions for a fixed list of wavelengths, one column per wavelength."""
    wavelengths: np.ndarray
    solutions: np.ndarray
    norms: np.ndarray

    def __len__(self) -> int:
        return len(self.wavelengths)

    def subset(self, indices: Sequence[int]) -> "TruthCache":
        indices = np.asarray(indices, dtype=np.int64)
        return TruthCache(self.wavelengths[indices], self.solutions[:, indices], self.norms[indices])


def build_truth_cache(blocks: AffineBlocks, model: CoefficientModel, wavelengths: Sequence[float]) -> TruthCache:
    """Solve the truth problem once per wavelength."""
    grid = np.asarray(wavelengths, dtype=float)
    if grid.size == 0:
        return TruthCache(grid, np.zeros((blocks.size, 0)), np.zeros(0))
    solutions = np.column_stack([solve_system(blocks, theta(model, wavelength)) for wavelength in grid])
    return TruthCache(grid, solutions, h1_norms(blocks, solutions))


@dataclass(frozen=True, eq=False)
class ReducedBasis:
    """
    Orthonormalized snapshot basis and its projected affine blocks.

    Attributes:
        sample_set: wavelengths S_N in insertion order
        basis_matrix: (N_dof, N) basis vectors zeta_1..zeta_N
        projected_blocks: (4, N, N) Z^T A^q Z
        projected_load: (N,) Z^T F
        reference_lambda: wavelength whose energy inner product orthogonalizes the basis
        orthogonalize: False keeps raw (unnormalized) snapshots
    """
    blocks: AffineBlocks
    model: CoefficientModel
    reference_lambda: float = DEFAULT_REFERENCE_LAMBDA
    orthogonalize: bool = True
    n_max: Optional[int] = None
    sample_set: Tuple[float, ...] = ()
    basis_matrix: np.ndarray = field(default=None, repr=False)
    projected_blocks: np.ndarray = field(default=None, repr=False)
    projected_load: np.ndarray = field(default=None, repr=False)
    reference_matrix: sps.csc_matrix = field(default=None, repr=False)
    # A^q Z and M_ref Z, kept so residuals and Gram-Schmidt avoid repeated sparse products
    block_images: np.ndarray = field(default=None, repr=False)
    reference_image: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        size = self.blocks.size
        if self.basis_matrix is None:
            object.__setattr__(self, "basis_matrix", np.zeros((size, 0)))
            object.__setattr__(self, "projected_blocks", np.zeros((4, 0, 0)))
            object.__setattr__(self, "projected_load", np.zeros(0))
            object.__setattr__(self, "block_images", np.zeros((4, size, 0)))
            object.__setattr__(self, "reference_image", np.zeros((size, 0)))
        if self.reference_matrix is None:
            self.model.check_domain(self.reference_lambda)
            object.__setattr__(self, "reference_matrix", self.blocks.combine(theta(self.model, self.reference_lambda)))

    def __repr__(self):
        return f"<ReducedBasis(N={self.size}, sample_set={[round(s, 6) for s in self.sample_set]})>"

    @property
    def size(self) -> int:
        return len(self.sample_set)

    def projected_matrix(self, wavelength: float) -> np.ndarray:
        return np.tensordot(np.asarray(theta(self.model, wavelength)), self.projected_blocks, axes=1)


@dataclass(frozen=True)
class RBSolution:
    coefficients: np.ndarray
    wavelength: float


def empty_basis(blocks: AffineBlocks, model: CoefficientModel,
                reference_lambda: float = DEFAULT_REFERENCE_LAMBDA,
                orthogonalize: bool = True, n_max: Optional[int] = None) -> ReducedBasis:
    return ReducedBasis(blocks=blocks, model=model, reference_lambda=reference_lambda,
                        orthogonalize=orthogonalize, n_max=n_max)


def add_snapshot(rb: ReducedBasis, wavelength: float, snapshot: Optional[np.ndarray] = None) -> ReducedBasis:
    """
    Return a new basis with the truth solution at `wavelength` appended.

    The snapshot is orthogonalized against the current basis by modified
    Gram-Schmidt in the reference energy inner product, with one
    reorthogonalization pass, then normalized.

    Args:
        rb: Current basis
        wavelength: Parameter value to add
        snapshot: Precomputed truth coefficients (solved here when omitted)

    Raises:
        DuplicateSnapshotError: If the wavelength is already in the sample set
        SnapshotDependenceError: If the orthogonalized snapshot is numerically zero
        WavelengthDomainError: If the wavelength is outside the parameter space
    """
    rb.model.check_domain(wavelength)
    wavelength = float(wavelength)
    if any(abs(wavelength - existing) <= DUPLICATE_TOLERANCE for existing in rb.sample_set):
        raise DuplicateSnapshotError(f"wavelength {wavelength} nm is already in the sample set")
    if rb.n_max is not None and rb.size >= rb.n_max:
        raise ValueError(f"basis already holds N_max = {rb.n_max} snapshots")
    if rb.size >= rb.blocks.size:
        raise ValueError("basis size cannot exceed the number of finite element unknowns")

    vector = solve_system(rb.blocks, theta(rb.model, wavelength)) if snapshot is None \
        else np.array(snapshot, dtype=float)
    pre_norm = float(np.sqrt(max(vector @ (rb.reference_matrix @ vector), 0.0)))
    if pre_norm == 0.0:
        raise SnapshotDependenceError(f"snapshot at {wavelength} nm is zero")

    if rb.orthogonalize:
        for _ in range(2):
            for j in range(rb.size):
                vector -= (rb.reference_image[:, j] @ vector) * rb.basis_matrix[:, j]
        post_norm = float(np.sqrt(max(vector @ (rb.reference_matrix @ vector), 0.0)))
        if post_norm < DEPENDENCE_RATIO * pre_norm:
            raise SnapshotDependenceError(
                f"snapshot at {wavelength} nm is linearly dependent on the basis "
                f"(norm ratio {post_norm / pre_norm:.3e})"
            )
        vector /= post_norm

    images = np.stack([block @ vector for block in rb.blocks.blocks])
    basis = np.column_stack((rb.basis_matrix, vector))
    block_images = np.concatenate((rb.block_images, images[:, :, None]), axis=2)

    size = rb.size + 1
    projected = np.zeros((4, size, size))
    projected[:, :-1, :-1] = rb.projected_blocks
    coupling = np.einsum("iN,qi->qN", basis, images)
    projected[:, -1, :] = coupling
    projected[:, :, -1] = coupling

    return dataclasses.replace(
        rb,
        sample_set=rb.sample_set + (wavelength,),
        basis_matrix=basis,
        projected_blocks=projected,
        projected_load=np.append(rb.projected_load, vector @ rb.blocks.F),
        block_images=block_images,
        reference_image=np.column_stack((rb.reference_image, rb.reference_matrix @ vector)),
    )


def build_basis(blocks: AffineBlocks, model: CoefficientModel, wavelengths: Sequence[float],
                reference_lambda: float = DEFAULT_REFERENCE_LAMBDA, orthogonalize: bool = True,
                skip_dependent: bool = True) -> ReducedBasis:
    """
    Basis spanned by the snapshots at `wavelengths`, in order.

    Dependent snapshots are skipped with a warning when skip_dependent is set.
    """
    rb = empty_basis(blocks, model, reference_lambda, orthogonalize)
    for wavelength in wavelengths:
        try:
            rb = add_snapshot(rb, wavelength)
        except SnapshotDependenceError as e:
            if not skip_dependent:
                raise
            logger.warning(f"Skipping snapshot: {e}")
    return rb


def _check_condition(condition: np.ndarray, wavelengths) -> None:
    condition = np.atleast_1d(condition)
    bad = ~np.isfinite(condition) | (condition > MAX_CONDITION)
    if np.any(bad):
        index = int(np.flatnonzero(bad)[0])
        raise ConditioningError(
            f"projected system is singular at {np.atleast_1d(wavelengths)[index]:g} nm",
            float(condition[index]),
        )


def online_solve(rb: ReducedBasis, wavelength: float) -> RBSolution:
    """
    Solve (sum_q Theta^q A_hat^q) c = F_hat; the cost depends on N only.

    Raises:
        ValueError: For an empty basis
        ConditioningError: If the projected matrix is singular to working precision
    """
    if rb.size == 0:
        raise ValueError("online solve needs at least one basis function")
    matrix = rb.projected_matrix(wavelength)
    _check_condition(np.linalg.cond(matrix), wavelength)
    try:
        coefficients = scipy.linalg.solve(matrix, rb.projected_load)
    except scipy.linalg.LinAlgError as e:
        raise ConditioningError(f"projected solve failed at {wavelength:g} nm: {e}", float("inf"))
    return RBSolution(coefficients=coefficients, wavelength=float(wavelength))


def online_coefficients(rb: ReducedBasis, wavelengths: Sequence[float]) -> np.ndarray:
    """Online solves for many wavelengths at once, shape (N, len(wavelengths))."""
    grid = np.asarray(wavelengths, dtype=float)
    if rb.size == 0:
        return np.zeros((0, grid.size))
    matrices = np.tensordot(theta_matrix(rb.model, grid), rb.projected_blocks, axes=1)
    _check_condition(np.linalg.cond(matrices), grid)
    rhs = np.broadcast_to(rb.projected_load, (grid.size, rb.size))[..., None]
    try:
        return np.linalg.solve(matrices, rhs)[..., 0].T
    except np.linalg.LinAlgError as e:
        raise ConditioningError(f"batched projected solve failed: {e}", float("inf"))


def reconstruct(rb: ReducedBasis, solution: RBSolution) -> np.ndarray:
    """Full-order field Z c."""
    return rb.basis_matrix @ np.asarray(solution.coefficients, dtype=float)


def condition_number(rb: ReducedBasis, wavelength: float) -> float:
    """2-norm condition number of the projected matrix (no singularity check)."""
    return float(np.linalg.cond(rb.projected_matrix(wavelength)))


def orthonormality_defect(rb: ReducedBasis) -> float:
    """max |Z^T M_ref Z - I|."""
    if rb.size == 0:
        return 0.0
    gram = rb.basis_matrix.T @ rb.reference_image
    return float(np.max(np.abs(gram - np.eye(rb.size))))


def relative_errors(rb: ReducedBasis, truths: TruthCache) -> np.ndarray:
    """H1 relative error of the RB approximation at every cached wavelength (1.0 for N = 0)."""
    if rb.size == 0:
        return np.ones(len(truths))
    approximations = rb.basis_matrix @ online_coefficients(rb, truths.wavelengths)
    return h1_norms(rb.blocks, truths.solutions - approximations) / truths.norms


def relative_error(rb: ReducedBasis, wavelength: float, truth: Optional[np.ndarray] = None) -> float:
    """
    ||u_fe - u_N||_H1 / ||u_fe||_H1 at one wavelength; solves the truth problem
    unless `truth` is given.
    """
    rb.model.check_domain(wavelength)
    if truth is None:
        truth = solve_system(rb.blocks, theta(rb.model, wavelength))
    truth = np.asarray(truth, dtype=float)
    cache = TruthCache(np.array([float(wavelength)]), truth[:, None], h1_norms(rb.blocks, truth[:, None]))
    return float(relative_errors(rb, cache)[0])


def total_relative_error(rb: ReducedBasis, test_set: Union[Sequence[float], TruthCache]) -> float:
    """Sum of relative errors over a test set of wavelengths (or a prebuilt truth cache)."""
    cache = test_set if isinstance(test_set, TruthCache) else build_truth_cache(rb.blocks, rb.model, test_set)
    return float(np.sum(relative_errors(rb, cache)))


def residuals(rb: ReducedBasis, wavelengths: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Residual vectors F - A_lambda Z c, shape (N_dof, k), and the online coefficients."""
    grid = np.asarray(wavelengths, dtype=float)
    coefficients = online_coefficients(rb, grid)
    weights = theta_matrix(rb.model, grid)
    residual = np.repeat(rb.blocks.F[:, None], grid.size, axis=1)
    for q in range(4):
        residual -= rb.block_images[q] @ (coefficients * weights[:, q])
    return residual, coefficients


def residual_dual_norms(rb: ReducedBasis, wavelengths: Sequence[float]) -> np.ndarray:
    """Dual norms of the residual through the Riesz representer, for many wavelengths."""
    if rb.size == 0:
        raise ValueError("residual dual norm needs at least one basis function")
    residual, _ = residuals(rb, wavelengths)
    representer = np.asarray(rb.blocks.riesz(residual)).reshape(residual.shape)
    return np.sqrt(np.maximum(np.einsum("ij,ij->j", residual, representer), 0.0))


def residual_dual_norm(rb: ReducedBasis, wavelength: float) -> float:
    """
    sup_v r(v) / ||v||_H1 = sqrt(r^T X^-1 r) for r = F - A_lambda u_N.
    """
    rb.model.check_domain(wavelength)
    return float(residual_dual_norms(rb, [wavelength])[0])


def output_values(rb: ReducedBasis, wavelengths: Sequence[float]) -> np.ndarray:
    """Compliant RB output s_N(lambda) = F_hat . c(lambda)."""
    if rb.size == 0:
        return np.zeros(len(wavelengths))
    return rb.projected_load @ online_coefficients(rb, wavelengths)


def export_error_curve(rb: ReducedBasis, wavelengths: Sequence[float], path: Union[str, Path],
                       truths: Optional[TruthCache] = None) -> pd.DataFrame:
    """Write lambda, rel_error, dual_norm for every wavelength as CSV."""
    cache = truths if truths is not None else build_truth_cache(rb.blocks, rb.model, wavelengths)
    frame = pd.DataFrame({
        "lambda": cache.wavelengths,
        "rel_error": relative_errors(rb, cache),
        "dual_norm": residual_dual_norms(rb, cache.wavelengths) if rb.size else np.full(len(cache), np.nan),
    })
    frame.to_csv(path, index=False)
    return frame

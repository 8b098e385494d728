"""
Types shared by the sample-set selectors and the relative-error objective
used by the gradient and Metropolis selectors.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from services.fem_service import AffineBlocks, solve_system
from services.optics_service import LAMBDA_MAX, LAMBDA_MIN, CoefficientModel, theta
from services.rb_service import (
    DEFAULT_REFERENCE_LAMBDA,
    DUPLICATE_TOLERANCE,
    ReducedBasis,
    TruthCache,
    add_snapshot,
    build_truth_cache,
    empty_basis,
    relative_errors,
)
from utils.errors import DuplicateSnapshotError, SnapshotDependenceError

logger = logging.getLogger(__name__)

XI_KINDS = ("linear", "uniform_random", "log_uniform")
# Truth snapshots kept per objective; the gradient selector revisits its coarse mesh every iteration
SNAPSHOT_CACHE_SIZE = 512


@dataclass(frozen=True, eq=False)
class TrainingMesh:
    """
    Parameter meshes: the fine surrogate mesh xi, the objective mesh upsilon
    and the coarse start mesh lambda_coarse.
    """
    xi: np.ndarray
    upsilon: np.ndarray
    lambda_coarse: np.ndarray
    lambda_min: float = LAMBDA_MIN
    lambda_max: float = LAMBDA_MAX

    def __post_init__(self):
        for name in ("xi", "upsilon", "lambda_coarse"):
            values = np.array(getattr(self, name), dtype=float).ravel()
            if values.size == 0:
                raise ValueError(f"{name} must not be empty")
            if np.any(values < self.lambda_min) or np.any(values > self.lambda_max):
                raise ValueError(f"{name} has points outside [{self.lambda_min}, {self.lambda_max}]")
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        if np.any(np.diff(self.xi) <= 0):
            raise ValueError("xi must be strictly increasing")
        if not len(self.xi) >= len(self.upsilon) >= len(self.lambda_coarse):
            raise ValueError(
                f"mesh sizes must satisfy |xi| >= |upsilon| >= |lambda_coarse|, got "
                f"{len(self.xi)}, {len(self.upsilon)}, {len(self.lambda_coarse)}"
            )

    @classmethod
    def build(cls, lambda_min: float = LAMBDA_MIN, lambda_max: float = LAMBDA_MAX,
              xi_size: int = 400, upsilon_size: int = 50, coarse_size: int = 9,
              xi_kind: str = "linear", seed: int = 0) -> "TrainingMesh":
        """
        Equispaced upsilon and lambda_coarse; xi equispaced or drawn from a
        uniform / log-uniform density (seeded, sorted, deduplicated).
        """
        if xi_kind == "linear":
            xi = np.linspace(lambda_min, lambda_max, xi_size)
        elif xi_kind == "uniform_random":
            xi = np.random.default_rng(seed).uniform(lambda_min, lambda_max, xi_size)
        elif xi_kind == "log_uniform":
            xi = np.exp(np.random.default_rng(seed).uniform(np.log(lambda_min), np.log(lambda_max), xi_size))
        else:
            raise ValueError(f"xi_kind must be one of {XI_KINDS}, got {xi_kind!r}")
        return cls(
            xi=np.unique(xi),
            upsilon=np.linspace(lambda_min, lambda_max, upsilon_size),
            lambda_coarse=np.linspace(lambda_min, lambda_max, coarse_size),
            lambda_min=lambda_min,
            lambda_max=lambda_max,
        )

    def coarse_for(self, n_max: int) -> np.ndarray:
        """
        The coarse start mesh, refined by midpoint insertion until it holds
        more points than the requested basis size.
        """
        coarse = np.asarray(self.lambda_coarse, dtype=float)
        while len(coarse) <= n_max and len(coarse) >= 2:
            midpoints = 0.5 * (coarse[:-1] + coarse[1:])
            coarse = np.sort(np.concatenate((coarse, midpoints)))
        return coarse

    @property
    def upsilon_step(self) -> float:
        if len(self.upsilon) < 2:
            return 1.0
        return float((self.upsilon.max() - self.upsilon.min()) / (len(self.upsilon) - 1))


@dataclass(frozen=True)
class StoppingRule:
    epsilon_tol_min: float
    n_max: int

    def __post_init__(self):
        if not self.epsilon_tol_min > 0:
            raise ValueError(f"epsilon_tol_min must be positive, got {self.epsilon_tol_min}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")


@dataclass(frozen=True)
class MetropolisConfig:
    """
    Chain settings: pilot_len adaptation steps, burn_in discarded steps,
    samples retained steps, initial_step proposal std in nm.
    """
    n_target: int
    pilot_len: int = 500
    burn_in: int = 500
    samples: int = 2000
    initial_step: float = 20.0
    rng_seed: int = 0
    likelihood_scale: float = 1.0

    def __post_init__(self):
        for name in ("n_target", "pilot_len", "burn_in", "samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.initial_step <= 0:
            raise ValueError(f"initial_step must be positive, got {self.initial_step}")
        if self.likelihood_scale <= 0:
            raise ValueError(f"likelihood_scale must be positive, got {self.likelihood_scale}")


@dataclass
class SelectionResult:
    algorithm: str
    sample_set: Tuple[float, ...]
    indicators: List[float] = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    iterations: int = 0
    warnings: List[str] = field(default_factory=list)
    details: Dict[str, object] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.sample_set)


class ErrorObjective:
    """
    J(S) = sum over upsilon of the H1 relative error of the basis built from S.

    Truth solutions over upsilon are solved once at construction. Candidate
    snapshots go through a bounded LRU cache keyed by wavelength.
    """

    def __init__(self, blocks: AffineBlocks, model: CoefficientModel, upsilon: np.ndarray,
                 reference_lambda: float = DEFAULT_REFERENCE_LAMBDA, orthogonalize: bool = True,
                 truths: Optional[TruthCache] = None):
        self.blocks = blocks
        self.model = model
        self.reference_lambda = reference_lambda
        self.orthogonalize = orthogonalize
        self.truths = truths if truths is not None else build_truth_cache(blocks, model, upsilon)
        self.evaluations = 0
        self.truth_solves = 0
        self.snapshot = lru_cache(maxsize=SNAPSHOT_CACHE_SIZE)(self._solve_truth)

    def _solve_truth(self, wavelength: float) -> np.ndarray:
        self.truth_solves += 1
        solution = solve_system(self.blocks, theta(self.model, wavelength))
        solution.setflags(write=False)
        return solution

    def empty(self) -> ReducedBasis:
        return empty_basis(self.blocks, self.model, self.reference_lambda, self.orthogonalize)

    def errors(self, rb: ReducedBasis) -> np.ndarray:
        self.evaluations += 1
        return relative_errors(rb, self.truths)

    def __call__(self, rb: ReducedBasis) -> float:
        return float(np.sum(self.errors(rb)))

    def max_error(self, rb: ReducedBasis) -> float:
        return float(np.max(self.errors(rb)))

    def augment(self, rb: ReducedBasis, wavelength: float) -> ReducedBasis:
        """rb with the snapshot at `wavelength`, or rb itself when that adds nothing to the span."""
        wavelength = float(wavelength)
        if any(abs(wavelength - existing) <= DUPLICATE_TOLERANCE for existing in rb.sample_set):
            return rb
        try:
            return add_snapshot(rb, wavelength, snapshot=self.snapshot(wavelength))
        except (DuplicateSnapshotError, SnapshotDependenceError):
            return rb

    def augmented(self, rb: ReducedBasis, wavelength: float) -> float:
        """J(S u {wavelength})."""
        return self(self.augment(rb, wavelength))

    def basis_for(self, wavelengths) -> ReducedBasis:
        """Basis from a whole sample set; duplicate or dependent members are dropped."""
        rb = self.empty()
        for wavelength in wavelengths:
            rb = self.augment(rb, wavelength)
        return rb

"""
Metropolis sampling: draw whole N-point sample sets from
P(S) proportional to exp(-beta J(S)) on ordered vectors in the parameter
interval, with a random-walk chain whose covariance is adapted once after a
pilot run and then frozen. The selected set is the sorted chain mean.
"""
import logging
import time
from typing import List

import numpy as np

from services.fem_service import AffineBlocks
from services.optics_service import CoefficientModel
from services.rb_service import DEFAULT_REFERENCE_LAMBDA
from services.sampling_service import ErrorObjective, MetropolisConfig, SelectionResult, TrainingMesh
from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

ADAPTIVE_SCALE = 2.38
COVARIANCE_JITTER = 1e-6
ACCEPTANCE_RANGE = (0.05, 0.7)


class SampleSetDensity:
    """Unnormalized log density of a candidate sample set."""

    def __init__(self, objective: ErrorObjective, lambda_min: float, lambda_max: float, beta: float):
        self.objective = objective
        self.lambda_min = lambda_min
        self.lambda_max = lambda_max
        self.beta = beta

    def in_support(self, state: np.ndarray) -> bool:
        return bool(
            np.all(state >= self.lambda_min)
            and np.all(state <= self.lambda_max)
            and np.all(np.diff(state) > 0)
        )

    def __call__(self, state: np.ndarray) -> float:
        if not self.in_support(state):
            return -np.inf
        # members already in the span of earlier ones add no basis function
        return -self.beta * self.objective(self.objective.basis_for(state))


def initial_state(n: int, lambda_min: float, lambda_max: float) -> np.ndarray:
    """Equispaced interior points lambda_min + (lambda_max - lambda_min) k / (n + 1)."""
    k = np.arange(1, n + 1)
    return lambda_min + (lambda_max - lambda_min) * k / (n + 1)


def _run_chain(density: SampleSetDensity, state: np.ndarray, log_p: float, cholesky: np.ndarray,
               steps: int, rng: np.random.Generator, keep: bool):
    accepted = 0
    kept: List[np.ndarray] = []
    for _ in range(steps):
        proposal = state + cholesky @ rng.standard_normal(len(state))
        proposal_log_p = density(proposal)
        if np.log(rng.uniform()) <= proposal_log_p - log_p:
            state, log_p = proposal, proposal_log_p
            accepted += 1
        if keep:
            kept.append(state.copy())
    return state, log_p, accepted, kept


def adapted_covariance(chain: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    """(2.38^2 / N) Cov(chain) + 1e-6 I, or `fallback` when the chain never moved."""
    n = chain.shape[1]
    covariance = np.atleast_2d(np.cov(chain, rowvar=False))
    if not np.all(np.isfinite(covariance)) or np.allclose(covariance, 0.0):
        return fallback
    return (ADAPTIVE_SCALE ** 2 / n) * covariance + COVARIANCE_JITTER * np.eye(n)


def metropolis_select(blocks: AffineBlocks, model: CoefficientModel, mesh: TrainingMesh,
                      cfg: MetropolisConfig,
                      reference_lambda: float = DEFAULT_REFERENCE_LAMBDA,
                      orthogonalize: bool = True) -> SelectionResult:
    """
    Metropolis selection of an N-point sample set.

    Raises:
        ConfigurationError: If n_target exceeds the number of upsilon points
    """
    if cfg.n_target > len(mesh.upsilon):
        raise ConfigurationError(
            f"metropolis n_target = {cfg.n_target} exceeds the {len(mesh.upsilon)} upsilon points"
        )
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.rng_seed)
    objective = ErrorObjective(blocks, model, mesh.upsilon, reference_lambda, orthogonalize)
    density = SampleSetDensity(objective, mesh.lambda_min, mesh.lambda_max, cfg.likelihood_scale)

    n = cfg.n_target
    state = initial_state(n, mesh.lambda_min, mesh.lambda_max)
    log_p = density(state)
    if not np.isfinite(log_p):
        raise ConfigurationError(f"initial sample set {np.round(state, 3).tolist()} has zero density")

    pilot_covariance = cfg.initial_step ** 2 * np.eye(n)
    state, log_p, pilot_accepted, pilot_chain = _run_chain(
        density, state, log_p, np.linalg.cholesky(pilot_covariance), cfg.pilot_len, rng, keep=True
    )
    covariance = adapted_covariance(np.array(pilot_chain), pilot_covariance)
    cholesky = np.linalg.cholesky(covariance)
    logger.info(
        f"Metropolis pilot done: acceptance {pilot_accepted / cfg.pilot_len:.2f}, "
        f"adapted step scale {np.sqrt(np.mean(np.diag(covariance))):.3f} nm"
    )

    state, log_p, burn_accepted, _ = _run_chain(density, state, log_p, cholesky, cfg.burn_in, rng, keep=False)
    state, log_p, accepted, retained = _run_chain(density, state, log_p, cholesky, cfg.samples, rng, keep=True)

    retained = np.array(retained)
    estimate = np.sort(retained.mean(axis=0))
    acceptance = accepted / cfg.samples
    warnings = []
    if not ACCEPTANCE_RANGE[0] <= acceptance <= ACCEPTANCE_RANGE[1]:
        message = f"acceptance rate {acceptance:.3f} outside {ACCEPTANCE_RANGE}"
        logger.warning(message)
        warnings.append(message)

    return SelectionResult(
        algorithm="metropolis",
        sample_set=tuple(float(x) for x in estimate),
        indicators=[-log_p / cfg.likelihood_scale],
        wall_clock_seconds=time.perf_counter() - started,
        iterations=cfg.pilot_len + cfg.burn_in + cfg.samples,
        warnings=warnings,
        details={
            "acceptance_rate": acceptance,
            "pilot_acceptance_rate": pilot_accepted / cfg.pilot_len,
            "burn_in_acceptance_rate": burn_accepted / cfg.burn_in,
            "covariance": covariance,
            "posterior_std": retained.std(axis=0),
        },
    )

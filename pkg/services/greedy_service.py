"""
Greedy sampling: repeatedly add the training wavelength with the largest
a posteriori error indicator.
"""
import logging
import time

import numpy as np

from services.fem_service import AffineBlocks
from services.optics_service import CoefficientModel, theta_matrix
from services.rb_service import (
    DEFAULT_REFERENCE_LAMBDA,
    ReducedBasis,
    add_snapshot,
    empty_basis,
    output_values,
    residual_dual_norms,
)
from services.sampling_service import SelectionResult, StoppingRule, TrainingMesh
from utils.errors import IndicatorError, SnapshotDependenceError

logger = logging.getLogger(__name__)

INDICATORS = ("dual_norm", "output_bound")


def output_error_bounds(rb: ReducedBasis, wavelengths) -> np.ndarray:
    """Compliant output bound Delta_s = eps^2 / alpha_hat, with alpha_hat = min_q Theta^q."""
    alpha_hat = theta_matrix(rb.model, wavelengths).min(axis=1)
    return residual_dual_norms(rb, wavelengths) ** 2 / alpha_hat


def output_bound_indicators(rb: ReducedBasis, wavelengths) -> np.ndarray:
    """
    Relative output bound Delta_s / s_N for many wavelengths; NaN where the
    RB output is not positive.
    """
    bounds = output_error_bounds(rb, wavelengths)
    outputs = output_values(rb, wavelengths)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(outputs > 0, bounds / outputs, np.nan)


def output_bound_indicator(rb: ReducedBasis, wavelength: float) -> float:
    """
    eps^2(lambda) / (alpha_hat(lambda) s_N(lambda)).

    Raises:
        IndicatorError: If the RB output s_N(lambda) is not positive
    """
    rb.model.check_domain(wavelength)
    value = float(output_bound_indicators(rb, [wavelength])[0])
    if np.isnan(value):
        raise IndicatorError(f"RB output is not positive at {wavelength:g} nm")
    return value


def evaluate_indicator(rb: ReducedBasis, wavelengths: np.ndarray, indicator: str) -> np.ndarray:
    if indicator == "dual_norm":
        return residual_dual_norms(rb, wavelengths)
    if indicator == "output_bound":
        return output_bound_indicators(rb, wavelengths)
    raise ValueError(f"indicator must be one of {INDICATORS}, got {indicator!r}")


def greedy_select(blocks: AffineBlocks, model: CoefficientModel, mesh: TrainingMesh,
                  stop: StoppingRule, indicator: str = "dual_norm", rng_seed: int = 0,
                  reference_lambda: float = DEFAULT_REFERENCE_LAMBDA,
                  orthogonalize: bool = True) -> SelectionResult:
    """
    Greedy selection over the fine training mesh xi.

    The first sample is drawn uniformly from xi. Each iteration evaluates the
    indicator on every remaining xi point, takes the maximiser (smallest
    wavelength on ties) and stops once the maximum drops to the tolerance or
    the basis reaches n_max. Dependent snapshots are skipped and their
    wavelength leaves the candidate set.
    """
    if indicator not in INDICATORS:
        raise ValueError(f"indicator must be one of {INDICATORS}, got {indicator!r}")
    started = time.perf_counter()
    rng = np.random.default_rng(rng_seed)
    candidates = np.asarray(mesh.xi, dtype=float)
    active = np.ones(len(candidates), dtype=bool)

    first = int(rng.integers(len(candidates)))
    rb = add_snapshot(empty_basis(blocks, model, reference_lambda, orthogonalize, stop.n_max), candidates[first])
    active[first] = False

    indicators = []
    warnings = []
    iterations = 0
    while rb.size < stop.n_max and np.any(active):
        iterations += 1
        values = np.full(len(candidates), np.nan)
        values[active] = evaluate_indicator(rb, candidates[active], indicator)

        undefined = active & np.isnan(values)
        if np.any(undefined):
            message = f"indicator undefined at {int(undefined.sum())} wavelengths; excluded"
            logger.warning(message)
            warnings.append(message)
            active &= ~undefined
            if not np.any(active):
                break

        best_index = int(np.nanargmax(np.where(active, values, np.nan)))
        best_value = float(values[best_index])
        indicators.append(best_value)
        if best_value <= stop.epsilon_tol_min:
            logger.info(f"Greedy stopped at N={rb.size}: max indicator {best_value:.3e} <= tolerance")
            break

        active[best_index] = False
        try:
            rb = add_snapshot(rb, candidates[best_index])
        except SnapshotDependenceError as e:
            message = f"skipped {candidates[best_index]:.6f} nm: {e}"
            logger.warning(message)
            warnings.append(message)
            continue
        logger.debug(f"Greedy added {candidates[best_index]:.3f} nm (indicator {best_value:.3e}), N={rb.size}")

    return SelectionResult(
        algorithm="greedy",
        sample_set=rb.sample_set,
        indicators=indicators,
        wall_clock_seconds=time.perf_counter() - started,
        iterations=iterations,
        warnings=warnings,
        details={"indicator": indicator},
    )

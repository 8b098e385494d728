"""
Gradient sampling: each new sample minimises the summed relative error
J(mu) = sum over upsilon of ||u_fe - u_{N+1}|| / ||u_fe|| of the augmented
basis S u {mu}, by projected steepest descent with an Armijo line search.
"""
import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from services.fem_service import AffineBlocks
from services.optics_service import CoefficientModel
from services.rb_service import DEFAULT_REFERENCE_LAMBDA, ReducedBasis, add_snapshot
from services.sampling_service import ErrorObjective, SelectionResult, StoppingRule, TrainingMesh
from utils.errors import DuplicateSnapshotError, SnapshotDependenceError

logger = logging.getLogger(__name__)

CANDIDATE_DUPLICATE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class GradientSettings:
    fd_step: float = 0.5
    initial_step: float = 10.0
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    gradient_tolerance: float = 1e-8
    min_step: float = 1e-3
    max_descent_iterations: int = 50
    continue_past_tolerance: bool = False
    extend_coarse_mesh: bool = True

    def __post_init__(self):
        if self.fd_step <= 0 or self.initial_step <= 0 or self.min_step <= 0:
            raise ValueError("fd_step, initial_step and min_step must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError(f"shrink must lie in (0, 1), got {self.shrink}")
        if not 0 < self.sufficient_decrease < 1:
            raise ValueError(f"sufficient_decrease must lie in (0, 1), got {self.sufficient_decrease}")
        if self.max_descent_iterations < 0:
            raise ValueError("max_descent_iterations must be >= 0")


@dataclass(frozen=True)
class DescentRecord:
    start: float
    start_value: float
    minimiser: float
    value: float
    steps: int


def central_difference(objective: Callable[[float], float], mu: float, step: float,
                       lower: float, upper: float) -> float:
    """Central difference, one-sided where mu +/- step leaves [lower, upper]."""
    left = max(mu - step, lower)
    right = min(mu + step, upper)
    if right <= left:
        return 0.0
    return (objective(right) - objective(left)) / (right - left)


def armijo_descent(objective: Callable[[float], float], start: float, start_value: float,
                   lower: float, upper: float, settings: GradientSettings) -> Tuple[float, float, int]:
    """
    Projected 1D steepest descent with Armijo backtracking.

    Steps move along -sign(gradient), starting at settings.initial_step nm and
    shrinking until J(candidate) <= J(mu) - c |g| |candidate - mu|. A step is
    only taken when that condition holds, so J never increases.

    Returns:
        (minimiser, objective value, accepted steps)
    """
    mu, value = start, start_value
    accepted = 0
    for _ in range(settings.max_descent_iterations):
        gradient = central_difference(objective, mu, settings.fd_step, lower, upper)
        if abs(gradient) <= settings.gradient_tolerance:
            break

        direction = -np.sign(gradient)
        step = settings.initial_step
        moved = False
        while step >= settings.min_step:
            candidate = float(np.clip(mu + direction * step, lower, upper))
            distance = abs(candidate - mu)
            if distance < settings.min_step:
                break
            candidate_value = objective(candidate)
            if candidate_value <= value - settings.sufficient_decrease * abs(gradient) * distance:
                mu, value, moved = candidate, candidate_value, True
                break
            step *= settings.shrink
        if not moved:
            break
        accepted += 1
    return mu, value, accepted


def _argmin_excluding(points: np.ndarray, values: np.ndarray, excluded) -> int:
    order = np.argsort(points, kind="stable")
    best = None
    for index in order:
        if excluded is not None and abs(points[index] - excluded) <= CANDIDATE_DUPLICATE_TOLERANCE:
            continue
        if best is None or values[index] < values[best]:
            best = index
    return int(order[0] if best is None else best)


def gradient_select(blocks: AffineBlocks, model: CoefficientModel, mesh: TrainingMesh,
                    stop: StoppingRule, rng_seed: int = 0,
                    settings: GradientSettings = GradientSettings(),
                    reference_lambda: float = DEFAULT_REFERENCE_LAMBDA,
                    orthogonalize: bool = True) -> SelectionResult:
    """
    Gradient selection of the sample set.

    Each iteration picks the start point minimising J over the coarse mesh
    (never the previous iteration's start point), descends from it, and adds
    the minimiser. A minimiser that duplicates a sample is shifted by one
    upsilon spacing and retried once; otherwise the iteration is skipped.
    """
    started = time.perf_counter()
    rng = np.random.default_rng(rng_seed)
    objective = ErrorObjective(blocks, model, mesh.upsilon, reference_lambda, orthogonalize)
    lower, upper = mesh.lambda_min, mesh.lambda_max

    rb = add_snapshot(objective.empty(), mesh.xi[int(rng.integers(len(mesh.xi)))])
    coarse = mesh.coarse_for(stop.n_max) if settings.extend_coarse_mesh else np.asarray(mesh.lambda_coarse)

    indicators: List[float] = []
    descents: List[DescentRecord] = []
    warnings: List[str] = []
    previous_start = None
    iterations = 0
    # Skipped iterations do not grow the basis; bound the loop regardless
    max_iterations = 3 * stop.n_max

    while rb.size < stop.n_max and iterations < max_iterations:
        iterations += 1
        current_error = objective.max_error(rb)
        indicators.append(current_error)
        if current_error <= stop.epsilon_tol_min and not settings.continue_past_tolerance:
            logger.info(f"Gradient stopped at N={rb.size}: max error {current_error:.3e} <= tolerance")
            break

        augmented: Dict[float, ReducedBasis] = {}

        def trial(mu: float, base: ReducedBasis = rb) -> float:
            mu = float(mu)
            if mu not in augmented:
                augmented[mu] = objective.augment(base, mu)
            return objective(augmented[mu])

        start_values = np.array([trial(mu) for mu in coarse])
        start_index = _argmin_excluding(coarse, start_values, previous_start)
        start = float(coarse[start_index])
        previous_start = start

        minimiser, value, steps = armijo_descent(trial, start, float(start_values[start_index]), lower, upper, settings)
        descents.append(DescentRecord(start, float(start_values[start_index]), minimiser, value, steps))

        added = False
        for candidate in (minimiser, _shifted(minimiser, mesh.upsilon_step, lower, upper)):
            if any(abs(candidate - s) <= CANDIDATE_DUPLICATE_TOLERANCE for s in rb.sample_set):
                continue
            try:
                rb = add_snapshot(rb, candidate, snapshot=objective.snapshot(candidate))
                added = True
                break
            except (DuplicateSnapshotError, SnapshotDependenceError) as e:
                logger.debug(f"Candidate {candidate:.6f} nm rejected: {e}")
        if not added:
            message = f"iteration {iterations}: minimiser {minimiser:.6f} nm duplicates the sample set; skipped"
            logger.warning(message)
            warnings.append(message)

    return SelectionResult(
        algorithm="gradient",
        sample_set=rb.sample_set,
        indicators=indicators,
        wall_clock_seconds=time.perf_counter() - started,
        iterations=iterations,
        warnings=warnings,
        details={"descents": descents, "objective_evaluations": objective.evaluations,
                 "truth_solves": objective.truth_solves},
    )


def _shifted(mu: float, step: float, lower: float, upper: float) -> float:
    return mu + step if mu + step <= upper else mu - step

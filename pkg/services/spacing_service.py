"""
Fixed point distributions over the parameter interval. These need no truth
solves; the selection time is just the cost of evaluating a formula.
"""
import time

import numpy as np

from services.optics_service import LAMBDA_MAX, LAMBDA_MIN
from services.sampling_service import SelectionResult

DEFAULT_SIGMA_BAR = 5.5e4


def _result(algorithm: str, points: np.ndarray, started: float, **details) -> SelectionResult:
    return SelectionResult(
        algorithm=algorithm,
        sample_set=tuple(float(x) for x in points),
        wall_clock_seconds=time.perf_counter() - started,
        iterations=len(points),
        details=details,
    )


def _check_size(n: int) -> None:
    if n < 1:
        raise ValueError(f"basis size must be >= 1, got {n}")


def log_spacing_points(n: int, lambda_min: float = LAMBDA_MIN, lambda_max: float = LAMBDA_MAX,
                       sigma_bar: float = DEFAULT_SIGMA_BAR) -> np.ndarray:
    """
    Points clustered at lambda_min by
    ln(sigma_bar (lambda_k - lambda_min) + 1) = (k - 1)/(n - 1) ln(sigma_bar (lambda_max - lambda_min) + 1).
    n = 1 gives [lambda_min].
    """
    _check_size(n)
    if n == 1:
        return np.array([float(lambda_min)])
    fractions = np.arange(n) / (n - 1)
    points = lambda_min + np.expm1(fractions * np.log1p(sigma_bar * (lambda_max - lambda_min))) / sigma_bar
    # pin the endpoints against rounding in expm1/log1p
    points[0], points[-1] = lambda_min, lambda_max
    return points


def log_spacing_select(n: int, lambda_min: float = LAMBDA_MIN, lambda_max: float = LAMBDA_MAX,
                       sigma_bar: float = DEFAULT_SIGMA_BAR) -> SelectionResult:
    started = time.perf_counter()
    points = log_spacing_points(n, lambda_min, lambda_max, sigma_bar)
    return _result("log_spacing", points, started, sigma_bar=sigma_bar)


def uniform_spacing_select(n: int, lambda_min: float = LAMBDA_MIN,
                           lambda_max: float = LAMBDA_MAX) -> SelectionResult:
    """Equispaced points including both endpoints (the midpoint when n = 1)."""
    started = time.perf_counter()
    _check_size(n)
    points = np.array([0.5 * (lambda_min + lambda_max)]) if n == 1 else np.linspace(lambda_min, lambda_max, n)
    return _result("uniform_spacing", points, started)


def chebyshev_spacing_select(n: int, lambda_min: float = LAMBDA_MIN,
                             lambda_max: float = LAMBDA_MAX) -> SelectionResult:
    """Chebyshev-Lobatto points cos(pi k / (n - 1)) mapped onto the interval, ascending."""
    started = time.perf_counter()
    _check_size(n)
    if n == 1:
        points = np.array([0.5 * (lambda_min + lambda_max)])
    else:
        nodes = -np.cos(np.pi * np.arange(n) / (n - 1))
        points = lambda_min + 0.5 * (nodes + 1.0) * (lambda_max - lambda_min)
        points[0], points[-1] = lambda_min, lambda_max
    return _result("chebyshev_spacing", points, started)

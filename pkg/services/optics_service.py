"""
Wavelength-dependent optical coefficients for the two tissue regions.

Healthy absorption is a quartic interpolant through five control points plus
two Gaussian spikes; the inclusion (tumor) absorption is a positive
perturbation of it. Diffusion follows D = 1 / (3 (mu_a + mu_s')).
"""
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from utils.errors import WavelengthDomainError

LAMBDA_MIN = 600.0
LAMBDA_MAX = 1000.0

DEFAULT_CONTROL_POINTS = ((600.0, 0.13), (700.0, 0.05), (800.0, 0.03), (900.0, 0.06), (1000.0, 0.12))
DEFAULT_SPIKE_1 = (725.0, 0.04, 15.0)
DEFAULT_SPIKE_2 = (950.0, 0.06, 20.0)
DEFAULT_MU_S_PRIME = 17.0


@dataclass(frozen=True)
class GaussianSpike:
    center: float
    amplitude: float
    width: float

    def __call__(self, wavelength):
        return self.amplitude * np.exp(-0.5 * ((wavelength - self.center) / self.width) ** 2)


@dataclass(frozen=True)
class CoefficientModel:
    """
    Absorption and diffusion profiles mu_a^0, mu_a^1, D_0, D_1 over [lambda_min, lambda_max].

    The tumor rule maps mu_a^0 to mu_a^1 = tumor_factor * mu_a^0 + tumor_offset.
    """
    control_points: Tuple[Tuple[float, float], ...] = DEFAULT_CONTROL_POINTS
    spike_1: GaussianSpike = GaussianSpike(*DEFAULT_SPIKE_1)
    spike_2: GaussianSpike = GaussianSpike(*DEFAULT_SPIKE_2)
    tumor_factor: float = 2.0
    tumor_offset: float = 0.0
    mu_s_prime: float = DEFAULT_MU_S_PRIME
    lambda_min: float = LAMBDA_MIN
    lambda_max: float = LAMBDA_MAX
    _quartic: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        points = np.asarray(self.control_points, dtype=float)
        if points.shape != (5, 2):
            raise ValueError(f"expected five (wavelength, mu_a) control points, got shape {points.shape}")
        if len(np.unique(points[:, 0])) != 5:
            raise ValueError("control point wavelengths must be distinct")
        if self.mu_s_prime <= 0:
            raise ValueError(f"mu_s_prime must be positive, got {self.mu_s_prime}")
        if not self.lambda_min < self.lambda_max:
            raise ValueError("lambda_min must be smaller than lambda_max")
        # Interpolate in a centred variable to keep the Vandermonde system well scaled
        coefficients = np.polyfit(self._scaled(points[:, 0]), points[:, 1], 4)
        object.__setattr__(self, "_quartic", coefficients)

    def _scaled(self, wavelength):
        midpoint = 0.5 * (self.lambda_min + self.lambda_max)
        half_width = 0.5 * (self.lambda_max - self.lambda_min)
        return (np.asarray(wavelength, dtype=float) - midpoint) / half_width

    def check_domain(self, wavelength) -> None:
        values = np.atleast_1d(np.asarray(wavelength, dtype=float))
        if np.any(~np.isfinite(values)) or np.any(values < self.lambda_min) or np.any(values > self.lambda_max):
            raise WavelengthDomainError(
                f"wavelength {wavelength} outside parameter space [{self.lambda_min}, {self.lambda_max}] nm"
            )

    def healthy_profile(self, wavelength):
        return np.polyval(self._quartic, self._scaled(wavelength)) + self.spike_1(wavelength) + self.spike_2(wavelength)

    def check_invariants(self, samples: int = 401) -> List[str]:
        """
        Return violated model invariants over an equispaced wavelength sweep.
        """
        problems = []
        grid = np.linspace(self.lambda_min, self.lambda_max, samples)
        healthy = mu_a(self, grid, 0)
        tumor = mu_a(self, grid, 1)
        if np.any(healthy <= 0):
            problems.append(f"healthy absorption not positive (min {healthy.min():.4g} cm^-1)")
        if np.any(tumor <= healthy):
            worst = grid[int(np.argmin(tumor - healthy))]
            problems.append(f"tumor absorption is not a positive perturbation of healthy tissue (e.g. at {worst:g} nm)")
        return problems


def mu_a(model: CoefficientModel, wavelength, region: int):
    """
    Absorption coefficient (cm^-1) in region 0 (healthy) or 1 (inclusion).

    Accepts a scalar or an array of wavelengths.

    Raises:
        WavelengthDomainError: If a wavelength lies outside the parameter space
        ValueError: If region is not 0 or 1
    """
    model.check_domain(wavelength)
    healthy = model.healthy_profile(wavelength)
    if region == 0:
        return healthy
    if region == 1:
        return model.tumor_factor * healthy + model.tumor_offset
    raise ValueError(f"region must be 0 or 1, got {region}")


def diffusion(model: CoefficientModel, wavelength, region: int):
    """Diffusion coefficient D = 1 / (3 (mu_a + mu_s')) in cm."""
    return 1.0 / (3.0 * (mu_a(model, wavelength, region) + model.mu_s_prime))


def theta(model: CoefficientModel, wavelength: float) -> Tuple[float, float, float, float]:
    """
    Affine coefficient functions at one wavelength, ordered (D_0, mu_a^0, D_1, mu_a^1)
    to match the blocks (A00, A01, A10, A11).
    """
    return (
        float(diffusion(model, wavelength, 0)),
        float(mu_a(model, wavelength, 0)),
        float(diffusion(model, wavelength, 1)),
        float(mu_a(model, wavelength, 1)),
    )


def theta_matrix(model: CoefficientModel, wavelengths: Sequence[float]) -> np.ndarray:
    """Stacked theta for many wavelengths, shape (len(wavelengths), 4)."""
    grid = np.asarray(wavelengths, dtype=float)
    return np.column_stack((
        diffusion(model, grid, 0),
        mu_a(model, grid, 0),
        diffusion(model, grid, 1),
        mu_a(model, grid, 1),
    ))


def coercivity_lower_bound(model: CoefficientModel, wavelength: float) -> float:
    """alpha_hat(lambda) = min_q Theta^q(lambda), a lower bound of the H1 coercivity constant."""
    return min(theta(model, wavelength))


def equivalent_wavelengths(model: CoefficientModel, wavelength: float, samples: int = 4001) -> np.ndarray:
    """
    Every wavelength whose Theta equals Theta(wavelength), sorted.

    Theta is a function of mu_a^0 alone, so this is the level set of the
    healthy absorption through `wavelength`. Crossings are bracketed on an
    equispaced sweep and refined with Brent's method; tangential touches
    between sweep points are not reported.
    """
    model.check_domain(wavelength)
    level = float(mu_a(model, wavelength, 0))

    def gap(x):
        return float(mu_a(model, x, 0)) - level

    grid = np.linspace(model.lambda_min, model.lambda_max, samples)
    gaps = mu_a(model, grid, 0) - level
    roots = [float(wavelength), *grid[gaps == 0.0]]
    roots.extend(brentq(gap, grid[i], grid[i + 1]) for i in np.flatnonzero(gaps[:-1] * gaps[1:] < 0))
    roots = np.sort(np.asarray(roots, dtype=float))
    return roots[np.concatenate(([True], np.diff(roots) > 1e-6))]

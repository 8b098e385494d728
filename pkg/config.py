"""
Experiment configuration: pydantic models over the `section.key = value`
file plus process environment from `.env`.
"""
import json
import os
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from services.fem_service import SourceSpec
from services.gradient_service import GradientSettings
from services.mesh_service import MIN_TARGET_ELEMENTS, Geometry
from services.optics_service import (
    DEFAULT_CONTROL_POINTS,
    DEFAULT_MU_S_PRIME,
    DEFAULT_SPIKE_1,
    DEFAULT_SPIKE_2,
    CoefficientModel,
    GaussianSpike,
)
from services.sampling_service import XI_KINDS, MetropolisConfig, StoppingRule, TrainingMesh
from utils.config_parser import parse_config_file, parse_config_text, split_names, split_numbers, split_pairs
from utils.errors import ConfigurationError

load_dotenv(dotenv_path=".env")

LOG_LEVEL = os.getenv("RBM_LOG_LEVEL", "INFO")
DATABASE_URL = os.getenv("RBM_DATABASE_URL")

ALGORITHMS = ("greedy", "gradient", "metropolis", "log_spacing", "uniform_spacing", "chebyshev_spacing")
STOCHASTIC_ALGORITHMS = ("greedy", "gradient", "metropolis")
DEFAULT_ALGORITHMS = ("greedy", "gradient", "metropolis", "log_spacing")
DEFAULT_SIZES = (5, 6, 7, 8, 9, 10, 15, 20)
# Raw snapshot projections turn singular to working precision beyond this size
RAW_SNAPSHOT_MAX_SIZE = 7


def _numbers(value):
    return tuple(split_numbers(value)) if isinstance(value, str) else value


def _pairs(value):
    return tuple(split_pairs(value)) if isinstance(value, str) else value


def _names(value):
    return tuple(split_names(value)) if isinstance(value, str) else value


class ConfigSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometryConfig(ConfigSection):
    outer_radius: float = Field(25.0, description="Disk radius (cm)")
    inclusion_center: Tuple[float, float] = Field((-15.0, -10.0), description="Inclusion centre (cm)")
    inclusion_radius: float = Field(5.0, description="Inclusion radius (cm)")

    @field_validator("inclusion_center", mode="before")
    @classmethod
    def split_center(cls, value):
        return _numbers(value)

    def build(self) -> Geometry:
        geometry = Geometry(self.outer_radius, self.inclusion_center, self.inclusion_radius)
        geometry.validate()
        return geometry


class MeshConfig(ConfigSection):
    target_elements: int = Field(2097, ge=MIN_TARGET_ELEMENTS, description="Requested triangle count")
    seed: int = Field(0, description="Seed for the interior point jitter")


class OpticsConfig(ConfigSection):
    control_points: Tuple[Tuple[float, float], ...] = Field(
        DEFAULT_CONTROL_POINTS, description="Five (wavelength nm, mu_a cm^-1) points of the healthy quartic"
    )
    spike1: Tuple[float, float, float] = Field(DEFAULT_SPIKE_1, description="center, amplitude, width")
    spike2: Tuple[float, float, float] = Field(DEFAULT_SPIKE_2, description="center, amplitude, width")
    tumor_factor: float = 2.0
    tumor_offset: float = 0.0
    mu_s_prime: float = Field(DEFAULT_MU_S_PRIME, gt=0)

    @field_validator("control_points", mode="before")
    @classmethod
    def split_points(cls, value):
        return _pairs(value)

    @field_validator("spike1", "spike2", mode="before")
    @classmethod
    def split_spike(cls, value):
        return _numbers(value)

    def build(self, lambda_min: float, lambda_max: float) -> CoefficientModel:
        return CoefficientModel(
            control_points=self.control_points,
            spike_1=GaussianSpike(*self.spike1),
            spike_2=GaussianSpike(*self.spike2),
            tumor_factor=self.tumor_factor,
            tumor_offset=self.tumor_offset,
            mu_s_prime=self.mu_s_prime,
            lambda_min=lambda_min,
            lambda_max=lambda_max,
        )


class SourceConfig(ConfigSection):
    amplitude: float = Field(15.0, ge=0)
    width: float = Field(10.0, gt=0, description="Gaussian width parameter (cm^2)")
    center: Tuple[float, float] = (-24.5196, -4.8773)

    @field_validator("center", mode="before")
    @classmethod
    def split_center(cls, value):
        return _numbers(value)

    def build(self) -> SourceSpec:
        return SourceSpec(self.amplitude, self.center, self.width)


class ParameterSpaceConfig(ConfigSection):
    lambda_min: float = 600.0
    lambda_max: float = 1000.0

    @model_validator(mode="after")
    def check_order(self):
        if not self.lambda_min < self.lambda_max:
            raise ValueError(f"lambda_min ({self.lambda_min}) must be below lambda_max ({self.lambda_max})")
        return self


class TrainingConfig(ConfigSection):
    xi_size: int = Field(400, ge=2)
    upsilon_size: int = Field(50, ge=2)
    lambda_coarse_size: int = Field(9, ge=2)
    xi_kind: str = "linear"

    @field_validator("xi_kind")
    @classmethod
    def check_kind(cls, value: str) -> str:
        if value not in XI_KINDS:
            raise ValueError(f"xi_kind must be one of {XI_KINDS}")
        return value

    @model_validator(mode="after")
    def check_sizes(self):
        if not self.xi_size >= self.upsilon_size >= self.lambda_coarse_size:
            raise ValueError("training sizes must satisfy xi_size >= upsilon_size >= lambda_coarse_size")
        return self


class GreedyConfig(ConfigSection):
    tolerance: float = Field(1e-5, gt=0)
    indicator: str = "dual_norm"

    @field_validator("indicator")
    @classmethod
    def check_indicator(cls, value: str) -> str:
        if value not in ("dual_norm", "output_bound"):
            raise ValueError("indicator must be dual_norm or output_bound")
        return value


class GradientConfig(ConfigSection):
    tolerance: float = Field(1e-7, gt=0)
    fd_step: float = Field(0.5, gt=0)
    initial_step: float = Field(10.0, gt=0)
    shrink: float = Field(0.5, gt=0, lt=1)
    sufficient_decrease: float = Field(1e-4, gt=0, lt=1)
    max_descent_iterations: int = Field(50, ge=0)
    min_step: float = Field(1e-3, gt=0)
    gradient_tolerance: float = Field(1e-8, ge=0)
    continue_past_tolerance: bool = False

    def build(self) -> GradientSettings:
        return GradientSettings(**self.model_dump(exclude={"tolerance"}))


class MetropolisSettings(ConfigSection):
    pilot_len: int = Field(500, ge=1)
    burn_in: int = Field(500, ge=1)
    samples: int = Field(2000, ge=1)
    initial_step: float = Field(20.0, gt=0, description="Pilot proposal std (nm)")
    likelihood_scale: float = Field(1.0, gt=0)


class RBConfig(ConfigSection):
    reference_lambda: float = Field(800.0, description="Wavelength of the orthogonalization inner product")
    orthogonalize: bool = Field(True, description="False keeps raw snapshots, for conditioning comparisons on small bases")


class HarnessConfig(ConfigSection):
    algorithms: Tuple[str, ...] = DEFAULT_ALGORITHMS
    sizes: Tuple[int, ...] = DEFAULT_SIZES
    trials: int = Field(10, ge=1)
    test_size: int = Field(100, ge=1)
    seed: int = 0
    workers: int = Field(1, ge=1, description="Concurrent cells; above 1 the recorded selection times include contention")
    error_curves: bool = Field(False, description="Write a per-wavelength error curve CSV for every cell")
    output_dir: str = "results"

    @field_validator("algorithms", mode="before")
    @classmethod
    def split_algorithms(cls, value):
        return _names(value)

    @field_validator("sizes", mode="before")
    @classmethod
    def split_sizes(cls, value):
        if isinstance(value, str):
            numbers = split_numbers(value)
            if any(n != int(n) for n in numbers):
                raise ValueError("sizes must be integers")
            return tuple(int(n) for n in numbers)
        return value

    @field_validator("algorithms")
    @classmethod
    def check_algorithms(cls, value):
        if not value:
            raise ValueError("at least one algorithm is required")
        unknown = [name for name in value if name not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithms {unknown}; choose from {ALGORITHMS}")
        return value

    @field_validator("sizes")
    @classmethod
    def check_sizes(cls, value):
        if not value or any(n < 1 for n in value):
            raise ValueError("sizes must be a nonempty list of positive integers")
        return value


class ExperimentConfig(ConfigSection):
    """The whole experiment. Section names match the config file."""
    geometry: GeometryConfig = GeometryConfig()
    mesh: MeshConfig = MeshConfig()
    optics: OpticsConfig = OpticsConfig()
    source: SourceConfig = SourceConfig()
    parameter: ParameterSpaceConfig = ParameterSpaceConfig()
    training: TrainingConfig = TrainingConfig()
    greedy: GreedyConfig = GreedyConfig()
    gradient: GradientConfig = GradientConfig()
    metropolis: MetropolisSettings = MetropolisSettings()
    rb: RBConfig = RBConfig()
    experiment: HarnessConfig = HarnessConfig()

    @model_validator(mode="after")
    def check_cross_section(self):
        self.geometry.build()
        lower, upper = self.parameter.lambda_min, self.parameter.lambda_max
        if not lower <= self.rb.reference_lambda <= upper:
            raise ValueError(f"rb.reference_lambda must lie in [{lower}, {upper}]")
        if max(self.experiment.sizes) > self.training.xi_size:
            raise ValueError("basis sizes must not exceed training.xi_size")
        if "metropolis" in self.experiment.algorithms and max(self.experiment.sizes) > self.training.upsilon_size:
            raise ValueError("metropolis basis sizes must not exceed training.upsilon_size")
        if not self.rb.orthogonalize and max(self.experiment.sizes) > RAW_SNAPSHOT_MAX_SIZE:
            raise ValueError(
                f"rb.orthogonalize = false supports basis sizes up to {RAW_SNAPSHOT_MAX_SIZE}; "
                "raw snapshot systems are singular to working precision beyond that"
            )
        return self

    @property
    def output_dir(self) -> Path:
        return Path(self.experiment.output_dir)

    def geometry_model(self) -> Geometry:
        return self.geometry.build()

    def coefficient_model(self) -> CoefficientModel:
        return self.optics.build(self.parameter.lambda_min, self.parameter.lambda_max)

    def source_spec(self) -> SourceSpec:
        return self.source.build()

    def training_mesh(self) -> TrainingMesh:
        return TrainingMesh.build(
            self.parameter.lambda_min,
            self.parameter.lambda_max,
            xi_size=self.training.xi_size,
            upsilon_size=self.training.upsilon_size,
            coarse_size=self.training.lambda_coarse_size,
            xi_kind=self.training.xi_kind,
            seed=self.experiment.seed,
        )

    def stopping_rule(self, algorithm: str, n: int) -> StoppingRule:
        tolerance = self.gradient.tolerance if algorithm == "gradient" else self.greedy.tolerance
        return StoppingRule(tolerance, n)

    def metropolis_config(self, n: int, seed: int) -> MetropolisConfig:
        return MetropolisConfig(n_target=n, rng_seed=seed, **self.metropolis.model_dump())

    def test_wavelengths(self):
        return np.linspace(self.parameter.lambda_min, self.parameter.lambda_max, self.experiment.test_size)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True)


def _from_mapping(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}" for error in e.errors()
        )
        raise ConfigurationError(f"invalid configuration: {problems}")


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a configuration file.

    Raises:
        ConfigurationError: On unreadable files, malformed lines, unknown
            sections or keys, and invalid values
    """
    return _from_mapping(parse_config_file(path))


def load_config_text(text: str) -> ExperimentConfig:
    return _from_mapping(parse_config_text(text))


def apply_overrides(config: ExperimentConfig, out: Optional[str] = None,
                    algorithms: Optional[Sequence[str]] = None,
                    sizes: Optional[Sequence[int]] = None,
                    seed: Optional[int] = None,
                    error_curves: Optional[bool] = None) -> ExperimentConfig:
    """Return `config` with CLI flags applied and revalidated."""
    harness = config.experiment.model_dump()
    if out is not None:
        harness["output_dir"] = out
    if algorithms is not None:
        harness["algorithms"] = tuple(algorithms)
    if sizes is not None:
        harness["sizes"] = tuple(sizes)
    if seed is not None:
        harness["seed"] = seed
    if error_curves is not None:
        harness["error_curves"] = error_curves
    data = config.model_dump()
    data["experiment"] = harness
    return _from_mapping(data)


def database_url(output_dir: Union[str, Path]) -> str:
    """RBM_DATABASE_URL, or a SQLite ledger inside the output directory."""
    if DATABASE_URL:
        return DATABASE_URL
    return f"sqlite:///{Path(output_dir).resolve() / 'results.db'}"

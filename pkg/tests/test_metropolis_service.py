import numpy as np
import pytest

from services.metropolis_service import (
    SampleSetDensity,
    adapted_covariance,
    initial_state,
    metropolis_select,
)
from services.optics_service import equivalent_wavelengths
from services.sampling_service import ErrorObjective, MetropolisConfig, TrainingMesh
from utils.errors import ConfigurationError

SHORT_CHAIN = dict(pilot_len=40, burn_in=20, samples=40, initial_step=10.0)


def test_initial_state_is_interior_and_equispaced():
    np.testing.assert_allclose(initial_state(3, 600.0, 1000.0), [700.0, 800.0, 900.0])


def test_density_is_zero_outside_support(blocks, model, training):
    density = SampleSetDensity(ErrorObjective(blocks, model, training.upsilon), 600.0, 1000.0, 1.0)

    assert density(np.array([650.0, 640.0])) == -np.inf
    assert density(np.array([650.0, 650.0])) == -np.inf
    assert density(np.array([590.0, 700.0])) == -np.inf
    assert np.isfinite(density(np.array([650.0, 900.0])))


def test_adapted_covariance_falls_back_for_a_frozen_chain():
    fallback = 4.0 * np.eye(2)
    chain = np.tile([700.0, 900.0], (10, 1))
    np.testing.assert_array_equal(adapted_covariance(chain, fallback), fallback)


def test_adapted_covariance_scales_sample_covariance():
    rng = np.random.default_rng(0)
    chain = rng.normal(size=(500, 2)) * [1.0, 3.0]
    expected = (2.38 ** 2 / 2) * np.cov(chain, rowvar=False) + 1e-6 * np.eye(2)
    np.testing.assert_allclose(adapted_covariance(chain, np.eye(2)), expected)


def test_chain_returns_sorted_sample_set_inside_interval(blocks, model, training):
    result = metropolis_select(blocks, model, training, MetropolisConfig(n_target=3, rng_seed=1, **SHORT_CHAIN))
    samples = np.array(result.sample_set)

    assert result.algorithm == "metropolis"
    assert result.size == 3
    assert np.all(np.diff(samples) > 0)
    assert np.all((samples >= 600.0) & (samples <= 1000.0))
    assert 0.0 <= result.details["acceptance_rate"] <= 1.0
    assert result.iterations == 100


def test_chain_is_deterministic_for_a_seed(blocks, model, training):
    cfg = MetropolisConfig(n_target=2, rng_seed=4, **SHORT_CHAIN)
    assert metropolis_select(blocks, model, training, cfg).sample_set == \
        metropolis_select(blocks, model, training, cfg).sample_set


def test_target_larger_than_objective_mesh_is_rejected(blocks, model, training):
    with pytest.raises(ConfigurationError, match="upsilon"):
        metropolis_select(blocks, model, training, MetropolisConfig(n_target=len(training.upsilon) + 1))


def test_single_point_objective_concentrates_chain_on_a_zero(blocks, model):
    target = np.array([700.0])
    mesh = TrainingMesh(xi=target, upsilon=target, lambda_coarse=target)
    cfg = MetropolisConfig(n_target=1, pilot_len=300, burn_in=200, samples=300, initial_step=5.0,
                           likelihood_scale=1e4)

    result = metropolis_select(blocks, model, mesh, cfg)
    # J vanishes wherever Theta matches Theta(700), not only at 700
    zeros = equivalent_wavelengths(model, 700.0)
    assert len(zeros) > 1
    assert np.min(np.abs(zeros - result.sample_set[0])) <= 5.0


def test_density_is_finite_for_large_ordered_sets(blocks, model):
    mesh = TrainingMesh.build(xi_size=40, upsilon_size=20, coarse_size=5)
    objective = ErrorObjective(blocks, model, mesh.upsilon)
    density = SampleSetDensity(objective, 600.0, 1000.0, 1.0)
    state = initial_state(15, 600.0, 1000.0)

    log_p = density(state)
    assert np.isfinite(log_p)
    assert log_p == pytest.approx(-objective(objective.basis_for(state)))


def test_chain_runs_past_the_dependence_threshold(blocks, model):
    mesh = TrainingMesh.build(xi_size=40, upsilon_size=20, coarse_size=5)
    result = metropolis_select(blocks, model, mesh, MetropolisConfig(n_target=12, rng_seed=2, **SHORT_CHAIN))

    assert result.size == 12
    assert np.all(np.diff(result.sample_set) > 0)
    assert np.isfinite(result.indicators[0])


@pytest.mark.parametrize("field, value", [("n_target", 0), ("initial_step", 0.0), ("likelihood_scale", -1.0)])
def test_invalid_chain_settings_are_rejected(field, value):
    settings = dict(n_target=2)
    settings[field] = value
    with pytest.raises(ValueError):
        MetropolisConfig(**settings)

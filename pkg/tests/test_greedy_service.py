import numpy as np
import pytest

from services.fem_service import solve_system
from services.greedy_service import (
    greedy_select,
    output_bound_indicator,
    output_bound_indicators,
    output_error_bounds,
)
from services.optics_service import theta
from services.rb_service import build_basis, output_values
from services.sampling_service import StoppingRule


def test_single_snapshot_budget_stops_immediately(blocks, model, training):
    result = greedy_select(blocks, model, training, StoppingRule(1e-6, 1))

    assert result.size == 1
    assert result.sample_set[0] in training.xi
    assert result.indicators == []


def test_infinite_tolerance_stops_after_first_indicator(blocks, model, training):
    result = greedy_select(blocks, model, training, StoppingRule(float("inf"), 8))

    assert result.size == 1
    assert len(result.indicators) == 1


@pytest.mark.parametrize("indicator", ["dual_norm", "output_bound"])
def test_greedy_picks_distinct_training_points(blocks, model, training, indicator):
    result = greedy_select(blocks, model, training, StoppingRule(1e-12, 5), indicator=indicator, rng_seed=3)

    assert result.size == 5
    assert len(set(result.sample_set)) == 5
    assert set(result.sample_set) <= set(training.xi.tolist())
    assert result.indicators[-1] < result.indicators[0]
    assert result.details == {"indicator": indicator}


def test_greedy_is_deterministic_for_a_seed(blocks, model, training):
    first = greedy_select(blocks, model, training, StoppingRule(1e-12, 4), rng_seed=11)
    second = greedy_select(blocks, model, training, StoppingRule(1e-12, 4), rng_seed=11)

    assert first.sample_set == second.sample_set
    assert first.indicators == second.indicators


def test_unknown_indicator_is_rejected(blocks, model, training):
    with pytest.raises(ValueError, match="indicator"):
        greedy_select(blocks, model, training, StoppingRule(1e-6, 3), indicator="residual")


def test_output_bound_vanishes_at_samples(blocks, model):
    rb = build_basis(blocks, model, (650.0, 850.0))
    assert output_bound_indicator(rb, 650.0) <= 1e-12


def test_output_bound_is_valid(blocks, model):
    rb = build_basis(blocks, model, (620.0, 780.0, 960.0))
    grid = np.linspace(600.0, 1000.0, 17)
    truths = np.array([blocks.F @ solve_system(blocks, theta(model, w)) for w in grid])

    gaps = np.abs(truths - output_values(rb, grid))
    bounds = output_error_bounds(rb, grid)
    assert np.all(gaps <= bounds * (1.0 + 1e-8) + 1e-12 * np.abs(truths))
    assert np.all(np.isfinite(output_bound_indicators(rb, grid)))

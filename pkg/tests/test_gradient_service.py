import numpy as np
import pytest

from services.gradient_service import (
    GradientSettings,
    armijo_descent,
    central_difference,
    gradient_select,
)
from services.rb_service import add_snapshot
from services.sampling_service import ErrorObjective, StoppingRule


def quadratic(mu):
    return (mu - 3.0) ** 2


def test_central_difference_is_exact_for_quadratics():
    assert central_difference(quadratic, 5.0, 0.5, -10.0, 10.0) == pytest.approx(4.0)


def test_central_difference_goes_one_sided_at_bounds():
    expected = (quadratic(5.5) - quadratic(4.8)) / 0.7
    assert central_difference(quadratic, 5.0, 0.5, 4.8, 10.0) == pytest.approx(expected)


def test_armijo_descent_reaches_quadratic_minimum():
    mu, value, steps = armijo_descent(quadratic, 0.0, quadratic(0.0), -10.0, 10.0, GradientSettings())

    assert abs(mu - 3.0) < 0.1
    assert value == pytest.approx(quadratic(mu))
    assert value < quadratic(0.0)
    assert steps >= 2


def test_armijo_descent_stays_in_bounds():
    mu, _, _ = armijo_descent(quadratic, 0.0, quadratic(0.0), -1.0, 1.0, GradientSettings())
    assert mu == pytest.approx(1.0)


@pytest.mark.parametrize("overrides", [{"shrink": 1.0}, {"fd_step": 0.0}, {"sufficient_decrease": 1.5}])
def test_invalid_settings_are_rejected(overrides):
    with pytest.raises(ValueError):
        GradientSettings(**overrides)


def test_objective_at_existing_sample_equals_current_error(blocks, model, training):
    objective = ErrorObjective(blocks, model, training.upsilon)
    rb = objective.basis_for([700.0])
    assert objective.augmented(rb, 700.0) == objective(rb)
    assert objective.augmented(rb, 900.0) < objective(rb)


def test_objective_solves_each_candidate_once(blocks, model, training):
    objective = ErrorObjective(blocks, model, training.upsilon)
    rb = objective.basis_for([700.0])
    assert objective.truth_solves == 1

    first = objective.augment(rb, 900.0)
    second = objective.augment(rb, 900.0)
    assert objective.augment(rb, 700.0) is rb

    assert objective.truth_solves == 2
    np.testing.assert_allclose(first.basis_matrix, second.basis_matrix)
    np.testing.assert_allclose(first.basis_matrix, add_snapshot(rb, 900.0).basis_matrix, atol=1e-12)


def test_single_snapshot_budget_runs_no_descent(blocks, model, training):
    result = gradient_select(blocks, model, training, StoppingRule(1e-6, 1))

    assert result.size == 1
    assert result.iterations == 0
    assert result.details["descents"] == []


def test_gradient_selection_grows_the_basis(blocks, model, training):
    result = gradient_select(blocks, model, training, StoppingRule(1e-12, 3), rng_seed=2)
    samples = np.array(result.sample_set)

    assert result.size == 3
    assert len(np.unique(samples)) == 3
    assert np.all((samples >= 600.0) & (samples <= 1000.0))
    assert result.algorithm == "gradient"
    for record in result.details["descents"]:
        assert record.value <= record.start_value
    assert result.indicators[-1] < result.indicators[0]

    # the coarse mesh is scored again in the second iteration without new truth solves
    trials = result.details["objective_evaluations"] - result.iterations
    assert trials - result.details["truth_solves"] >= len(training.coarse_for(3))


def test_gradient_selection_is_deterministic(blocks, model, training):
    first = gradient_select(blocks, model, training, StoppingRule(1e-12, 2), rng_seed=5)
    second = gradient_select(blocks, model, training, StoppingRule(1e-12, 2), rng_seed=5)
    assert first.sample_set == second.sample_set

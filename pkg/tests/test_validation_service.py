import numpy as np
import pytest

from config import load_config_text
from services.rb_service import build_basis, build_truth_cache
from services.validation_service import (
    FAIL,
    PASS,
    SKIP,
    ValidationProblem,
    check_affine_equivalence,
    check_bounds,
    check_brute_force,
    check_conditioning,
    check_greedy_monotonicity,
    check_manufactured_convergence,
    check_metropolis_singleton,
    check_orthonormality,
    check_reproduction,
    conditioning_sample_set,
    manufactured_errors,
    validate_suite,
)
from services.mesh_service import generate_mesh

SAMPLES = (620.0, 790.0, 940.0)


@pytest.fixture(scope="module")
def problem(geometry, small_mesh, blocks, model):
    config = load_config_text("mesh.target_elements = 400\nexperiment.test_size = 15\n")
    truths = build_truth_cache(blocks, model, config.test_wavelengths())
    return ValidationProblem(config, geometry, small_mesh, blocks, model, truths)


@pytest.fixture(scope="module")
def basis(blocks, model):
    return build_basis(blocks, model, SAMPLES)


def test_affine_blocks_match_direct_assembly(problem):
    assert check_affine_equivalence(problem).status == PASS


def test_basis_checks_pass_on_a_good_basis(problem, basis):
    assert check_orthonormality(basis).status == PASS
    assert check_reproduction(problem, basis).status == PASS
    assert check_bounds(problem, SAMPLES).status == PASS


def test_conditioning_defers_raw_check_for_small_bases(problem):
    result = check_conditioning(problem, 3)
    assert result.status == PASS
    assert "raw check needs" in result.detail


def test_conditioning_reaches_raw_blow_up(problem):
    result = check_conditioning(problem, 12)

    assert result.status == PASS
    assert "raw check needs" not in result.detail
    raw_max = float(result.detail.rsplit("raw max ", 1)[1])
    assert raw_max > 1e6


def test_conditioning_sample_set_is_interior(model):
    np.testing.assert_allclose(conditioning_sample_set(model, 3), [700.0, 800.0, 900.0])


def test_brute_force_greedy_recovers_every_point(problem):
    assert check_brute_force(problem).status == PASS


@pytest.mark.slow
def test_metropolis_singleton_lands_on_a_zero_of_the_objective(problem):
    result = check_metropolis_singleton(problem)
    assert result.status == PASS, result.detail


@pytest.mark.parametrize("indicators, status", [
    ([3.0, 2.0, 2.0, 0.5], PASS),
    ([1.0, 1.0 + 1e-9], PASS),
    ([1.0, 0.5, 0.7], FAIL),
    ([], PASS),
])
def test_greedy_monotonicity(indicators, status):
    assert check_greedy_monotonicity(indicators).status == status


def test_coarse_targets_skip_manufactured_solution(geometry):
    config = load_config_text("mesh.target_elements = 50\n")
    assert check_manufactured_convergence(config, geometry).status == SKIP


@pytest.mark.slow
def test_manufactured_solution_converges_at_first_order(geometry):
    errors = manufactured_errors(geometry, generate_mesh(geometry, 130, seed=0))
    assert errors[0] > errors[1] > errors[2]
    assert 1.6 <= errors[1] / errors[2] <= 2.4


def test_broken_optics_fails_and_skips_dependent_checks():
    report = validate_suite(load_config_text("mesh.target_elements = 200\noptics.tumor_factor = 0.5\n"))

    assert not report.passed
    assert report.status_of("optics_invariants") == FAIL
    assert report.status_of("mesh_invariants") == PASS
    assert report.status_of("mms_convergence") == SKIP
    assert report.status_of("metropolis_singleton") == SKIP

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from services.fem_service import (
    SourceSpec,
    assemble_affine_blocks,
    assemble_boundary_load,
    assemble_direct,
    assemble_load,
    h1_inner,
    h1_norm,
    solve_system,
    solve_truth,
)
from services.mesh_service import TriMesh, nearest_boundary_vertex
from services.optics_service import theta
from utils.errors import AssemblyError, SolverError


def test_blocks_are_symmetric(blocks):
    for block in blocks.blocks:
        assert spla.norm(block - block.T) <= 1e-14 * spla.norm(block)


def test_stiffness_annihilates_constants(blocks):
    ones = np.ones(blocks.size)
    np.testing.assert_allclose(blocks.A00 @ ones + blocks.A10 @ ones, 0.0, atol=1e-12)


def test_mass_blocks_sum_to_region_areas(blocks, small_mesh):
    ones = np.ones(blocks.size)
    assert ones @ (blocks.A01 @ ones) == pytest.approx(small_mesh.region_area(0))
    assert ones @ (blocks.A11 @ ones) == pytest.approx(small_mesh.region_area(1))


@pytest.mark.parametrize("wavelength", [600.0, 733.3, 1000.0])
def test_affine_sum_matches_direct_assembly(blocks, small_mesh, model, wavelength):
    coefficients = theta(model, wavelength)
    direct = assemble_direct(small_mesh, coefficients)
    gap = spla.norm(blocks.combine(coefficients) - direct, "fro") / spla.norm(direct, "fro")
    assert gap <= 1e-12


def test_load_concentrates_at_snapped_source(blocks, small_mesh):
    source = SourceSpec()
    vertex = nearest_boundary_vertex(small_mesh, source.center)

    assert blocks.F.min() >= 0.0
    assert np.argmax(blocks.F) == vertex
    interior = np.setdiff1d(np.arange(small_mesh.n_vertices), small_mesh.boundary_vertices)
    np.testing.assert_array_equal(blocks.F[interior], 0.0)


def test_constant_flux_integrates_to_perimeter(small_mesh):
    load = assemble_boundary_load(small_mesh, lambda points: np.ones(len(points)))
    assert load.sum() == pytest.approx(small_mesh.boundary_length())


def test_zero_amplitude_source_gives_zero_solution(small_mesh, model):
    blocks = assemble_affine_blocks(small_mesh)
    load = assemble_load(small_mesh, SourceSpec(amplitude=0.0))
    solution = solve_system(blocks, theta(model, 800.0), load)
    np.testing.assert_array_equal(solution, 0.0)


def test_truth_solution_meets_residual_bound(blocks, model):
    coefficients = theta(model, 800.0)
    solution = solve_truth(blocks, coefficients, 800.0)
    residual = blocks.combine(coefficients) @ solution.coefficients - blocks.F

    assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(blocks.F)
    assert solution.wavelength == 800.0


@pytest.mark.parametrize("factor", [0.5, 4.0])
def test_scaling_theta_scales_solution_inversely(blocks, model, factor):
    coefficients = np.array(theta(model, 760.0))
    base = solve_system(blocks, coefficients)
    np.testing.assert_allclose(solve_system(blocks, factor * coefficients), base / factor, rtol=1e-9)


def test_single_triangle_blocks_match_closed_form():
    mesh = TriMesh(
        vertices=[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
        triangles=[(0, 1, 2)],
        region=[0],
        boundary_edges=[(0, 1), (1, 2), (2, 0)],
    )
    blocks = assemble_affine_blocks(mesh)

    stiffness = 0.5 * np.array([[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    mass = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 24.0
    np.testing.assert_allclose(blocks.A00.toarray(), stiffness, atol=1e-15)
    np.testing.assert_allclose(blocks.A01.toarray(), mass, atol=1e-15)
    assert blocks.A10.count_nonzero() == 0
    assert blocks.A11.count_nonzero() == 0
    np.testing.assert_allclose(blocks.X_gram.toarray(), stiffness + mass, atol=1e-15)


def test_nonpositive_coefficient_is_rejected(blocks):
    with pytest.raises(SolverError):
        solve_system(blocks, (0.01, 0.0, 0.01, 0.05))


def test_degenerate_element_is_reported():
    mesh = TriMesh(
        vertices=[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
        triangles=[(0, 1, 2)],
        region=[0],
        boundary_edges=[(0, 1), (1, 2), (2, 0)],
    )
    with pytest.raises(AssemblyError, match="degenerate element 0"):
        assemble_affine_blocks(mesh)


def test_h1_inner_rejects_wrong_length(blocks):
    with pytest.raises(ValueError):
        h1_inner(blocks, np.ones(blocks.size), np.ones(3))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1), scale=st.floats(min_value=-10.0, max_value=10.0))
def test_h1_inner_is_symmetric_and_homogeneous(blocks, seed, scale):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, blocks.size))

    assert h1_inner(blocks, u, v) == pytest.approx(h1_inner(blocks, v, u), rel=1e-12, abs=1e-12)
    assert h1_norm(blocks, scale * u) == pytest.approx(abs(scale) * h1_norm(blocks, u), rel=1e-12, abs=1e-12)
    assert h1_norm(blocks, u) > 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_h1_inner_obeys_cauchy_schwarz(blocks, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, blocks.size))
    assert abs(h1_inner(blocks, u, v)) <= h1_norm(blocks, u) * h1_norm(blocks, v) * (1.0 + 1e-12)

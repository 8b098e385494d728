import math

import numpy as np
import pytest

from services.mesh_service import (
    TriMesh,
    Geometry,
    generate_mesh,
    nearest_boundary_vertex,
    read_mesh,
    refine_mesh,
    write_mesh,
)
from utils.errors import GeometryError, MeshParseError


def test_generated_mesh_meets_target_and_invariants(geometry):
    mesh = generate_mesh(geometry, 200, seed=0)

    assert abs(mesh.n_triangles - 200) <= 0.25 * 200
    assert mesh.check_invariants(geometry) == []
    assert mesh.region_area(0) > 0 and mesh.region_area(1) > 0


def test_total_area_close_to_disk(geometry):
    mesh = generate_mesh(geometry, 200, seed=0)
    exact = math.pi * 25.0 ** 2
    assert mesh.signed_areas.sum() == pytest.approx(exact, rel=0.05)


def test_inclusion_area_close_to_circle(geometry):
    mesh = generate_mesh(geometry, 200, seed=0)
    assert mesh.region_area(1) == pytest.approx(math.pi * 5.0 ** 2, rel=0.05)


def test_generation_is_deterministic(geometry):
    assert generate_mesh(geometry, 300, seed=3) == generate_mesh(geometry, 300, seed=3)


def test_inclusion_touching_boundary_is_rejected():
    with pytest.raises(GeometryError, match="touches outer boundary"):
        generate_mesh(Geometry(1.0, (0.0, 0.0), 0.99), 100)


def test_target_below_minimum_is_rejected(geometry):
    with pytest.raises(GeometryError):
        generate_mesh(geometry, 10)


def test_doubling_target_does_not_coarsen(geometry):
    coarse = generate_mesh(geometry, 300, seed=0)
    fine = generate_mesh(geometry, 600, seed=0)
    assert fine.element_diameters.max() <= coarse.element_diameters.max()


def test_far_point_maps_to_nearest_boundary_vertex(small_mesh):
    index = nearest_boundary_vertex(small_mesh, (1000.0, 0.0))
    boundary = small_mesh.boundary_vertices
    distances = np.linalg.norm(small_mesh.vertices[boundary] - np.array([25.0, 0.0]), axis=1)

    assert index in boundary
    assert index == boundary[np.argmin(distances)]
    assert np.linalg.norm(small_mesh.vertices[index]) == pytest.approx(25.0)


def test_refinement_splits_every_triangle(small_mesh, geometry):
    refined = refine_mesh(small_mesh, geometry)

    assert refined.n_triangles == 4 * small_mesh.n_triangles
    assert len(refined.boundary_edges) == 2 * len(small_mesh.boundary_edges)
    assert np.all(refined.signed_areas > 0)
    radii = np.linalg.norm(refined.vertices[refined.boundary_vertices], axis=1)
    np.testing.assert_allclose(radii, 25.0, rtol=1e-12)
    assert refined.region_area(1) == pytest.approx(small_mesh.region_area(1), rel=0.05)


def test_flipped_triangles_are_reported(small_mesh, geometry):
    flipped = TriMesh(
        vertices=small_mesh.vertices,
        triangles=small_mesh.triangles[:, ::-1],
        region=small_mesh.region,
        boundary_edges=small_mesh.boundary_edges,
    )
    problems = flipped.check_invariants(geometry)
    assert any("non-positive signed area" in problem for problem in problems)


def test_mesh_file_reads_back_exactly(small_mesh, tmp_path):
    path = tmp_path / "disk.mesh"
    write_mesh(small_mesh, path)
    assert read_mesh(path) == small_mesh


def test_bad_region_label_reports_line(small_mesh, tmp_path):
    path = tmp_path / "disk.mesh"
    write_mesh(small_mesh, path)
    lines = path.read_text().splitlines()
    first_triangle = 1 + small_mesh.n_vertices
    i, j, k, _ = lines[first_triangle].split()
    lines[first_triangle] = f"{i} {j} {k} 7"
    path.write_text("\n".join(lines) + "\n")

    with pytest.raises(MeshParseError) as excinfo:
        read_mesh(path)
    assert excinfo.value.line == first_triangle + 1


def test_missing_header_is_rejected(tmp_path):
    path = tmp_path / "broken.mesh"
    path.write_text("0.0 0.0\n")
    with pytest.raises(MeshParseError, match="header"):
        read_mesh(path)


def test_header_without_edge_count_reads_remaining_lines_as_edges(small_mesh, tmp_path):
    path = tmp_path / "disk.mesh"
    write_mesh(small_mesh, path)
    lines = path.read_text().splitlines()
    lines[0] = f"vertices {small_mesh.n_vertices} / triangles {small_mesh.n_triangles}"
    path.write_text("\n".join(lines) + "\n")

    assert read_mesh(path) == small_mesh


def test_header_without_edge_count_needs_edges(small_mesh, tmp_path):
    path = tmp_path / "disk.mesh"
    write_mesh(small_mesh, path)
    lines = path.read_text().splitlines()
    lines[0] = f"vertices {small_mesh.n_vertices} / triangles {small_mesh.n_triangles}"
    path.write_text("\n".join(lines[:1 + small_mesh.n_vertices + small_mesh.n_triangles]) + "\n")

    with pytest.raises(MeshParseError, match="boundary edges"):
        read_mesh(path)

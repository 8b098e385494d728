"""
Triangular meshes of a disk with one circular inclusion.

The generator places points on both circles and on a jittered hexagonal
lattice, then takes their Delaunay triangulation. Lattice points are kept
away from the inclusion circle so that every chord of the inclusion polygon
is a Gabriel edge and therefore an edge of the triangulation.
"""
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import Delaunay

from utils.errors import GeometryError, MeshParseError

logger = logging.getLogger(__name__)

# Chord error below 1% of the radius needs at least 23 segments: 1 - cos(pi/23) < 0.01
MIN_CIRCLE_SEGMENTS = 23
# The inclusion must stay this fraction of the outer radius away from the boundary
MIN_GAP_FRACTION = 0.02
MIN_TARGET_ELEMENTS = 50
LATTICE_JITTER = 0.15
# Lattice points within this many interface chord lengths of the inclusion circle are dropped
INTERFACE_CLEARANCE = 0.6
CALIBRATION_STEPS = 6
CALIBRATION_TOLERANCE = 0.1

# The boundary edge count is optional; without it every line after the triangles is an edge
HEADER_PATTERN = re.compile(r"^vertices\s+(\d+)\s*/\s*triangles\s+(\d+)(?:\s*/\s*boundary_edges\s+(\d+))?$")


@dataclass(frozen=True)
class Geometry:
    """Disk of radius `outer_radius` centred at the origin with a circular inclusion (lengths in cm)."""
    outer_radius: float
    inclusion_center: Tuple[float, float]
    inclusion_radius: float

    def validate(self) -> None:
        """
        Check the geometry invariants.

        Raises:
            GeometryError: If a length is not positive or the inclusion
                touches the outer boundary within tolerance
        """
        if self.outer_radius <= 0 or self.inclusion_radius <= 0:
            raise GeometryError(
                f"radii must be positive (outer={self.outer_radius}, inclusion={self.inclusion_radius})"
            )
        reach = math.hypot(*self.inclusion_center) + self.inclusion_radius
        gap = self.outer_radius - reach
        if gap <= MIN_GAP_FRACTION * self.outer_radius:
            raise GeometryError(
                f"inclusion touches outer boundary within tolerance: "
                f"|center| + radius = {reach:g} vs outer radius {self.outer_radius:g}"
            )

    def in_inclusion(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points strictly inside the inclusion circle."""
        offset = np.asarray(points, dtype=float) - np.asarray(self.inclusion_center, dtype=float)
        return np.hypot(offset[..., 0], offset[..., 1]) < self.inclusion_radius


@dataclass(frozen=True, eq=False)
class TriMesh:
    """
    Conforming P1 triangulation.

    Attributes:
        vertices: (V, 2) coordinates in cm
        triangles: (T, 3) vertex indices, counter-clockwise
        region: (T,) labels, 1 inside the inclusion and 0 elsewhere
        boundary_edges: (B, 2) vertex pairs forming the closed outer loop
    """
    vertices: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    boundary_edges: np.ndarray

    def __post_init__(self):
        for name, dtype in (("vertices", float), ("triangles", np.int64),
                            ("region", np.int64), ("boundary_edges", np.int64)):
            array = np.array(getattr(self, name), dtype=dtype)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TriMesh):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.region, other.region)
                and np.array_equal(self.boundary_edges, other.boundary_edges))

    __hash__ = None

    def __repr__(self):
        return (f"<TriMesh(vertices={self.n_vertices}, triangles={self.n_triangles}, "
                f"boundary_edges={len(self.boundary_edges)})>")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def signed_areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def boundary_vertices(self) -> np.ndarray:
        """Sorted indices of the vertices on the outer boundary."""
        return np.unique(self.boundary_edges)

    @property
    def element_diameters(self) -> np.ndarray:
        corners = self.vertices[self.triangles]
        edges = corners - np.roll(corners, -1, axis=1)
        return np.linalg.norm(edges, axis=2).max(axis=1)

    def region_area(self, label: int) -> float:
        return float(self.signed_areas[self.region == label].sum())

    def boundary_length(self) -> float:
        ends = self.vertices[self.boundary_edges]
        return float(np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1).sum())

    def check_invariants(self, geometry: Geometry) -> List[str]:
        """
        Return a list of violated mesh invariants (empty when the mesh is valid).
        """
        problems = []
        areas = self.signed_areas
        if np.any(areas <= 0):
            problems.append(f"{int(np.sum(areas <= 0))} triangles with non-positive signed area")

        inside = geometry.in_inclusion(self.centroids)
        if np.any((self.region == 1) & ~inside):
            problems.append("triangle labelled 1 with centroid outside the inclusion")
        if not {0, 1} <= set(np.unique(self.region).tolist()):
            problems.append("one of the two regions is empty")

        try:
            loop = _order_boundary_loop(self.boundary_edges)
            if len(loop) != len(self.boundary_edges):
                problems.append("boundary edges do not form a single loop")
        except GeometryError as e:
            problems.append(str(e))

        exact = math.pi * geometry.outer_radius ** 2
        if self.n_triangles >= 2000 and abs(areas.sum() - exact) > 0.02 * exact:
            problems.append(f"total area {areas.sum():.4f} deviates from {exact:.4f} by more than 2%")
        return problems


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (vertices[triangles[:, k]] for k in range(3))
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def _circle_points(center: Sequence[float], radius: float, count: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(count) / count
    return np.column_stack((center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)))


def _segments_for(radius: float, spacing: float) -> int:
    return max(int(math.ceil(2.0 * math.pi * radius / spacing)), MIN_CIRCLE_SEGMENTS)


def _lattice_points(radius: float, spacing: float, rng: np.random.Generator) -> np.ndarray:
    row_height = spacing * math.sqrt(3.0) / 2.0
    rows = int(math.ceil(2.0 * radius / row_height)) + 1
    cols = int(math.ceil(2.0 * radius / spacing)) + 2
    jj, ii = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    x = -radius - spacing + ii * spacing + (jj % 2) * (spacing / 2.0)
    y = -radius + jj * row_height
    points = np.column_stack((x.ravel(), y.ravel()))
    jitter = rng.uniform(-LATTICE_JITTER * spacing, LATTICE_JITTER * spacing, size=points.shape)
    return points + jitter


def _order_boundary_loop(edges: np.ndarray) -> List[int]:
    """Walk the directed boundary edges; returns the vertex loop or raises if it is not closed."""
    successor: Dict[int, int] = {}
    for a, b in np.asarray(edges, dtype=np.int64).tolist():
        if a in successor:
            raise GeometryError(f"boundary vertex {a} has two outgoing boundary edges")
        successor[a] = b
    if not successor:
        raise GeometryError("mesh has no boundary edges")

    start = min(successor)
    loop = [start]
    current = successor[start]
    while current != start:
        if current not in successor or len(loop) > len(successor):
            raise GeometryError("boundary edges do not form a single closed loop")
        loop.append(current)
        current = successor[current]
    return loop


def _boundary_edges(triangles: np.ndarray) -> np.ndarray:
    """Edges used by exactly one triangle, oriented as in their (counter-clockwise) triangle, in loop order."""
    directed = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    keys = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    single = directed[counts[inverse.ravel()] == 1]

    loop = _order_boundary_loop(single)
    if len(loop) != len(single):
        raise GeometryError("boundary edges do not form a single closed loop")
    return np.column_stack((loop, np.roll(loop, -1)))


def _triangulate(geometry: Geometry, spacing: float, seed: int) -> TriMesh:
    rng = np.random.default_rng(seed)
    radius = geometry.outer_radius
    center = np.asarray(geometry.inclusion_center, dtype=float)
    inner_radius = geometry.inclusion_radius

    n_outer = _segments_for(radius, spacing)
    n_inner = _segments_for(inner_radius, spacing)
    outer = _circle_points((0.0, 0.0), radius, n_outer)
    inner = _circle_points(center, inner_radius, n_inner)

    # Keep lattice points clear of both polygons
    inner_chord = 2.0 * inner_radius * math.sin(math.pi / n_inner)
    sagitta = inner_radius * (1.0 - math.cos(math.pi / n_inner))
    lattice = _lattice_points(radius, spacing, rng)
    inradius = radius * math.cos(math.pi / n_outer)
    from_origin = np.hypot(lattice[:, 0], lattice[:, 1])
    from_interface = np.abs(np.hypot(lattice[:, 0] - center[0], lattice[:, 1] - center[1]) - inner_radius)
    keep = (from_origin < inradius - 0.5 * spacing) & (from_interface > INTERFACE_CLEARANCE * inner_chord + sagitta)
    points = np.concatenate([outer, inner, lattice[keep]])

    triangulation = Delaunay(points)
    triangles = triangulation.simplices.astype(np.int64)

    areas = _signed_areas(points, triangles)
    flipped = areas < 0
    triangles[flipped] = triangles[flipped][:, [0, 2, 1]]
    degenerate = np.abs(areas) <= 1e-12 * spacing ** 2
    if np.any(degenerate):
        logger.warning(f"Dropping {int(degenerate.sum())} degenerate triangles")
        triangles = triangles[~degenerate]

    # Compact away points Qhull did not use
    used = np.unique(triangles)
    remap = np.full(len(points), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    vertices = points[used]
    triangles = remap[triangles]

    centroids = vertices[triangles].mean(axis=1)
    region = geometry.in_inclusion(centroids).astype(np.int64)

    mesh = TriMesh(vertices=vertices, triangles=triangles, region=region,
                   boundary_edges=_boundary_edges(triangles))

    missing = _missing_interface_chords(mesh, remap[len(outer):len(outer) + n_inner])
    if missing:
        logger.warning(f"{missing} inclusion chords are not mesh edges; interface is approximated by neighbours")
    return mesh


def _edge_keys(triangles: np.ndarray) -> np.ndarray:
    return np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)


def _missing_interface_chords(mesh: TriMesh, ring: np.ndarray) -> int:
    if np.any(ring < 0):
        return int(np.sum(ring < 0))
    chords = np.sort(np.column_stack((ring, np.roll(ring, -1))), axis=1)
    existing = {tuple(edge) for edge in np.unique(_edge_keys(mesh.triangles), axis=0).tolist()}
    return sum(1 for chord in chords.tolist() if tuple(chord) not in existing)


def generate_mesh(geometry: Geometry, target_elements: int, seed: int = 0) -> TriMesh:
    """
    Generate a conforming mesh of the disk with its inclusion.

    The lattice spacing is calibrated over a few deterministic passes so the
    element count lands near `target_elements`.

    Args:
        geometry: Disk and inclusion
        target_elements: Desired number of triangles (>= 50)
        seed: Seed for the lattice jitter

    Returns:
        TriMesh with region labels and ordered boundary edges

    Raises:
        GeometryError: For degenerate geometry or a target below 50
    """
    geometry.validate()
    if target_elements < MIN_TARGET_ELEMENTS:
        raise GeometryError(f"target_elements must be >= {MIN_TARGET_ELEMENTS}, got {target_elements}")

    area = math.pi * geometry.outer_radius ** 2
    # Equilateral triangles of side h have area sqrt(3)/4 h^2
    spacing = math.sqrt(4.0 * area / (math.sqrt(3.0) * target_elements))

    best = None
    for _ in range(CALIBRATION_STEPS):
        mesh = _triangulate(geometry, spacing, seed)
        if best is None or abs(mesh.n_triangles - target_elements) < abs(best.n_triangles - target_elements):
            best = mesh
        if abs(mesh.n_triangles - target_elements) <= CALIBRATION_TOLERANCE * target_elements:
            break
        spacing *= math.sqrt(mesh.n_triangles / target_elements)

    logger.info(f"Generated mesh: {best.n_vertices} vertices, {best.n_triangles} triangles (target {target_elements})")
    return best


def refine_mesh(mesh: TriMesh, geometry: Geometry) -> TriMesh:
    """
    Split every triangle into four through its edge midpoints.

    Midpoints of outer boundary edges are projected onto the outer circle and
    midpoints of interface edges onto the inclusion circle. Children inherit
    the region label of their parent.
    """
    keys = _edge_keys(mesh.triangles)
    unique_edges, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    n_tri = mesh.n_triangles
    midpoint_index = mesh.n_vertices + inverse.reshape(3, n_tri).T  # columns: (0,1), (1,2), (2,0)

    midpoints = mesh.vertices[unique_edges].mean(axis=1)

    boundary_keys = {tuple(edge) for edge in np.sort(mesh.boundary_edges, axis=1).tolist()}
    on_boundary = np.array([tuple(edge) in boundary_keys for edge in unique_edges.tolist()], dtype=bool)
    midpoints[on_boundary] *= (geometry.outer_radius
                               / np.linalg.norm(midpoints[on_boundary], axis=1))[:, None]

    # Interface edges separate a region-0 triangle from a region-1 triangle
    edge_regions = np.zeros((len(unique_edges), 2), dtype=np.int64)
    np.add.at(edge_regions[:, 0], inverse, 1)
    np.add.at(edge_regions[:, 1], inverse, np.tile(mesh.region, 3))
    on_interface = (edge_regions[:, 0] == 2) & (edge_regions[:, 1] == 1)
    center = np.asarray(geometry.inclusion_center, dtype=float)
    offset = midpoints[on_interface] - center
    midpoints[on_interface] = center + offset * (geometry.inclusion_radius
                                                 / np.linalg.norm(offset, axis=1))[:, None]

    a, b, c = mesh.triangles.T
    m_ab, m_bc, m_ca = midpoint_index.T
    children = np.stack([
        np.column_stack((a, m_ab, m_ca)),
        np.column_stack((m_ab, b, m_bc)),
        np.column_stack((m_ca, m_bc, c)),
        np.column_stack((m_ab, m_bc, m_ca)),
    ], axis=1).reshape(-1, 3)

    lookup = {tuple(edge): mesh.n_vertices + idx for idx, edge in enumerate(unique_edges.tolist())}
    boundary = []
    for start, end in mesh.boundary_edges.tolist():
        middle = lookup[tuple(sorted((start, end)))]
        boundary.extend([(start, middle), (middle, end)])

    return TriMesh(
        vertices=np.concatenate([mesh.vertices, midpoints]),
        triangles=children,
        region=np.repeat(mesh.region, 4),
        boundary_edges=np.array(boundary, dtype=np.int64),
    )


def nearest_boundary_vertex(mesh: TriMesh, point: Sequence[float]) -> int:
    """
    Index of the boundary vertex closest to `point` (ties go to the lowest index).
    """
    candidates = mesh.boundary_vertices
    distances = np.linalg.norm(mesh.vertices[candidates] - np.asarray(point, dtype=float), axis=1)
    return int(candidates[int(np.argmin(distances))])


def write_mesh(mesh: TriMesh, path: Union[str, Path]) -> None:
    """Write a mesh as plain text; coordinates use repr() so reading back is exact."""
    lines = [f"vertices {mesh.n_vertices} / triangles {mesh.n_triangles} / boundary_edges {len(mesh.boundary_edges)}"]
    lines.extend(f"{x!r} {y!r}" for x, y in mesh.vertices.tolist())
    lines.extend(f"{i} {j} {k} {label}" for (i, j, k), label in zip(mesh.triangles.tolist(), mesh.region.tolist()))
    lines.extend(f"{i} {j}" for i, j in mesh.boundary_edges.tolist())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_fields(line: str, line_no: int, count: int, kind, what: str) -> list:
    fields = line.split()
    if len(fields) != count:
        raise MeshParseError(f"expected {count} fields for a {what}, got {len(fields)}", line_no)
    try:
        return [kind(field) for field in fields]
    except ValueError:
        raise MeshParseError(f"cannot parse {what} {line.strip()!r}", line_no)


def read_mesh(path: Union[str, Path]) -> TriMesh:
    """
    Read a mesh written by write_mesh. Headers without a boundary edge count
    are accepted; the lines after the triangles are then all boundary edges.

    Raises:
        MeshParseError: On a malformed line, an out-of-range vertex index or a
            region label other than 0/1 (the error carries the line number)
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MeshParseError("empty mesh file", 1)

    header = HEADER_PATTERN.match(lines[0].strip())
    if not header:
        raise MeshParseError("expected header 'vertices N / triangles M' (optionally '/ boundary_edges K')", 1)
    n_vertices, n_triangles = int(header.group(1)), int(header.group(2))
    if header.group(3) is None:
        n_edges = len(lines) - 1 - n_vertices - n_triangles
        if n_edges < 1:
            raise MeshParseError(f"expected boundary edges after line {1 + n_vertices + n_triangles}",
                                 max(len(lines), 1))
    else:
        n_edges = int(header.group(3))

    expected = 1 + n_vertices + n_triangles + n_edges
    if len(lines) != expected:
        raise MeshParseError(f"expected {expected} lines, found {len(lines)}", min(len(lines), expected) or 1)

    vertices, triangles, region, edges = [], [], [], []
    line_no = 1
    for _ in range(n_vertices):
        line_no += 1
        vertices.append(_parse_fields(lines[line_no - 1], line_no, 2, float, "vertex"))
    for _ in range(n_triangles):
        line_no += 1
        i, j, k, label = _parse_fields(lines[line_no - 1], line_no, 4, int, "triangle")
        if min(i, j, k) < 0 or max(i, j, k) >= n_vertices:
            raise MeshParseError(f"triangle references vertex outside 0..{n_vertices - 1}", line_no)
        if label not in (0, 1):
            raise MeshParseError(f"region label must be 0 or 1, got {label}", line_no)
        triangles.append((i, j, k))
        region.append(label)
    for _ in range(n_edges):
        line_no += 1
        i, j = _parse_fields(lines[line_no - 1], line_no, 2, int, "boundary edge")
        if min(i, j) < 0 or max(i, j) >= n_vertices:
            raise MeshParseError(f"boundary edge references vertex outside 0..{n_vertices - 1}", line_no)
        edges.append((i, j))

    return TriMesh(
        vertices=np.array(vertices, dtype=float).reshape(-1, 2),
        triangles=np.array(triangles, dtype=np.int64).reshape(-1, 3),
        region=np.array(region, dtype=np.int64),
        boundary_edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
    )

import pytest

from services.fem_service import SourceSpec, build_problem
from services.mesh_service import Geometry, generate_mesh
from services.optics_service import CoefficientModel
from services.sampling_service import TrainingMesh


@pytest.fixture(scope="session")
def geometry():
    return Geometry(outer_radius=25.0, inclusion_center=(-15.0, -10.0), inclusion_radius=5.0)


@pytest.fixture(scope="session")
def small_mesh(geometry):
    return generate_mesh(geometry, 400, seed=0)


@pytest.fixture(scope="session")
def model():
    return CoefficientModel()


@pytest.fixture(scope="session")
def blocks(small_mesh):
    return build_problem(small_mesh, SourceSpec())


@pytest.fixture(scope="session")
def training():
    return TrainingMesh.build(xi_size=40, upsilon_size=10, coarse_size=5)


@pytest.fixture
def write_config(tmp_path):
    """Write config text into tmp_path and return the file path."""
    def write(text: str, name: str = "experiment.conf"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return write

import pandas as pd
from typer.testing import CliRunner

from main import app
from utils.cli import EXIT_CONFIGURATION, EXIT_INVARIANT, EXIT_OK

runner = CliRunner()

SMALL_CONFIG = """
mesh.target_elements = 200
training.xi_size = 20
training.upsilon_size = 6
training.lambda_coarse_size = 3
experiment.test_size = 6
experiment.sizes = 2, 3
"""


def test_mesh_command_writes_mesh(write_config, tmp_path):
    config = write_config(SMALL_CONFIG)
    out = tmp_path / "mesh" / "disk.mesh"

    result = runner.invoke(app, ["--log-level", "WARNING", "mesh", "--config", str(config), "--out", str(out)])
    assert result.exit_code == EXIT_OK, result.output
    assert out.exists()
    assert "triangles" in result.output


def test_run_command_with_overrides(write_config, tmp_path):
    config = write_config(SMALL_CONFIG)
    out = tmp_path / "run"

    result = runner.invoke(app, [
        "run", "--config", str(config), "--out", str(out),
        "--algorithms", "log_spacing,chebyshev_spacing", "--sizes", "2,4",
    ])
    assert result.exit_code == EXIT_OK, result.output
    results = pd.read_csv(out / "results.csv")
    assert sorted(set(results["algorithm"])) == ["chebyshev_spacing", "log_spacing"]
    assert sorted(set(results["n"])) == [2, 4]
    assert (out / "summary.csv").exists()


def test_run_command_writes_error_curves(write_config, tmp_path):
    config = write_config(SMALL_CONFIG)
    out = tmp_path / "curves_run"

    result = runner.invoke(app, [
        "run", "--config", str(config), "--out", str(out), "--algorithms", "log_spacing", "--sizes", "2", "--curves",
    ])
    assert result.exit_code == EXIT_OK, result.output
    curve = pd.read_csv(out / "curves" / "log_spacing_n2_trial0.csv")
    assert list(curve.columns) == ["lambda", "rel_error", "dual_norm"]
    assert len(curve) == 6
    assert (curve["rel_error"] >= 0).all()


def test_unknown_key_exits_with_configuration_code(write_config, tmp_path):
    config = write_config("mesh.resolution = 3\n")
    result = runner.invoke(app, ["run", "--config", str(config), "--out", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIGURATION


def test_unknown_algorithm_flag_exits_with_configuration_code(write_config, tmp_path):
    config = write_config(SMALL_CONFIG)
    result = runner.invoke(app, ["run", "--config", str(config), "--out", str(tmp_path), "--algorithms", "simplex"])
    assert result.exit_code == EXIT_CONFIGURATION


def test_missing_config_file_exits_with_configuration_code(tmp_path):
    result = runner.invoke(app, ["validate", "--config", str(tmp_path / "absent.conf")])
    assert result.exit_code == EXIT_CONFIGURATION


def test_failed_invariant_exits_with_invariant_code(write_config):
    config = write_config(SMALL_CONFIG + "optics.tumor_factor = 0.5\n")
    result = runner.invoke(app, ["validate", "--config", str(config)])

    assert result.exit_code == EXIT_INVARIANT
    assert "optics_invariants: fail" in result.output

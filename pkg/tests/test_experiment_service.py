import math

import numpy as np
import pandas as pd
import pytest

from config import apply_overrides, database_url, load_config_text
from database import session_scope
from services import experiment_service, record_service
from services.experiment_service import (
    RESULT_COLUMNS,
    SUMMARY_COLUMNS,
    plan_cells,
    prepare_context,
    run_experiment,
    summarize,
)
from utils.errors import ConfigurationError

TINY_CONFIG = """
mesh.target_elements = 200
training.xi_size = 20
training.upsilon_size = 6
training.lambda_coarse_size = 3
greedy.tolerance = 1e-14
metropolis.pilot_len = 10
metropolis.burn_in = 5
metropolis.samples = 10
experiment.algorithms = greedy, metropolis, log_spacing
experiment.sizes = 2, 3
experiment.trials = 2
experiment.test_size = 8
experiment.workers = 2
"""


@pytest.fixture(scope="module")
def tiny_config():
    return load_config_text(TINY_CONFIG)


@pytest.fixture(scope="module")
def context(tiny_config):
    return prepare_context(tiny_config)


def test_cells_follow_algorithm_size_trial_order(tiny_config):
    cells = plan_cells(tiny_config)

    assert len(cells) == 2 * 2 + 2 * 2 + 2
    assert [(c.algorithm, c.n, c.trial) for c in cells[:4]] == [
        ("greedy", 2, 0), ("greedy", 2, 1), ("greedy", 3, 0), ("greedy", 3, 1)
    ]
    assert [c.seed for c in cells if c.algorithm == "metropolis"] == [0, 1, 0, 1]
    assert [(c.n, c.trial) for c in cells if c.algorithm == "log_spacing"] == [(2, 0), (3, 0)]


def test_run_writes_results_summary_plots_and_ledger(tiny_config, context, tmp_path):
    config = apply_overrides(tiny_config, out=str(tmp_path))
    outcome = run_experiment(config, context)

    results = pd.read_csv(outcome.results_path)
    summary = pd.read_csv(outcome.summary_path)
    assert list(results.columns) == RESULT_COLUMNS
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(results) == 10
    assert len(summary) == 6
    assert outcome.failures == []
    assert results["total_relative_error"].notna().all()

    greedy_two = results[(results.algorithm == "greedy") & (results.n == 2)]["total_relative_error"]
    row = summary[(summary.algorithm == "greedy") & (summary.n == 2)].iloc[0]
    assert row.mean_error == pytest.approx(greedy_two.mean())
    assert row.std_error == pytest.approx(greedy_two.std(ddof=0))

    log_row = results[(results.algorithm == "log_spacing") & (results.n == 2)].iloc[0]
    assert log_row.lambdas == "600.000000;1000.000000"
    assert all(path.exists() for path in outcome.plot_paths)
    assert len(outcome.plot_paths) == 2

    with session_scope(database_url(tmp_path)) as db:
        assert len(record_service.get_run_records(db, outcome.run_id)) == 10


def test_sample_sets_are_sorted_and_sized(tiny_config, context, tmp_path):
    outcome = run_experiment(apply_overrides(tiny_config, out=str(tmp_path)), context)
    for record in outcome.records:
        assert len(record.sample_set) == record.n
        assert list(record.sample_set) == sorted(record.sample_set)


def test_runs_are_reproducible_except_timings(tiny_config, context, tmp_path):
    first = run_experiment(apply_overrides(tiny_config, out=str(tmp_path / "a")), context)
    second = run_experiment(apply_overrides(tiny_config, out=str(tmp_path / "b")), context)

    columns = [c for c in RESULT_COLUMNS if c != "selection_seconds"]
    pd.testing.assert_frame_equal(pd.read_csv(first.results_path)[columns], pd.read_csv(second.results_path)[columns])


def test_results_do_not_depend_on_worker_count(tiny_config, context, tmp_path):
    serial_config = load_config_text(TINY_CONFIG.replace("experiment.workers = 2", "experiment.workers = 1"))
    serial = run_experiment(apply_overrides(serial_config, out=str(tmp_path / "serial")), context)
    pooled = run_experiment(apply_overrides(tiny_config, out=str(tmp_path / "pooled")), context)

    columns = [c for c in RESULT_COLUMNS if c != "selection_seconds"]
    pd.testing.assert_frame_equal(pd.read_csv(serial.results_path)[columns], pd.read_csv(pooled.results_path)[columns])


def test_failed_cell_becomes_nan_row(tiny_config, context, tmp_path, monkeypatch):
    original = experiment_service.select

    def flaky(ctx, algorithm, n, seed):
        if algorithm == "log_spacing" and n == 3:
            raise RuntimeError("selector crashed")
        return original(ctx, algorithm, n, seed)

    monkeypatch.setattr(experiment_service, "select", flaky)
    outcome = run_experiment(apply_overrides(tiny_config, out=str(tmp_path)), context)

    assert len(outcome.failures) == 1
    failed = outcome.failures[0]
    assert failed.error_message == "RuntimeError: selector crashed"
    assert math.isnan(failed.total_relative_error)
    results = pd.read_csv(outcome.results_path)
    assert len(results) == 10
    assert results["total_relative_error"].isna().sum() == 1


def test_summary_ignores_nan_rows():
    results = pd.DataFrame(
        [
            {"algorithm": "greedy", "n": 5, "trial": 0, "seed": 0, "total_relative_error": 1.0,
             "selection_seconds": 2.0, "lambdas": ""},
            {"algorithm": "greedy", "n": 5, "trial": 1, "seed": 1, "total_relative_error": 3.0,
             "selection_seconds": 4.0, "lambdas": ""},
            {"algorithm": "greedy", "n": 5, "trial": 2, "seed": 2, "total_relative_error": np.nan,
             "selection_seconds": np.nan, "lambdas": ""},
        ],
        columns=RESULT_COLUMNS,
    )
    row = summarize(results).iloc[0]

    assert (row.mean_error, row.std_error) == (2.0, 1.0)
    assert (row.mean_seconds, row.std_seconds) == (3.0, 1.0)


def test_broken_optics_is_a_configuration_error():
    with pytest.raises(ConfigurationError, match="optics"):
        prepare_context(load_config_text(TINY_CONFIG + "optics.tumor_factor = 0.5\n"))

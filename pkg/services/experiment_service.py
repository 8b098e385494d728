"""
Experiment harness: build the problem once, run every (algorithm, N, trial)
cell in a thread pool, and write results.csv, summary.csv, plots and the
ledger.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import List, Optional, Tuple

import pandas as pd

from config import STOCHASTIC_ALGORITHMS, ExperimentConfig, database_url
from database import init_db, session_scope
from services import record_service
from services.fem_service import AffineBlocks, build_problem
from services.gradient_service import gradient_select
from services.greedy_service import greedy_select
from services.mesh_service import TriMesh, generate_mesh
from services.metropolis_service import metropolis_select
from services.optics_service import CoefficientModel
from services.plot_service import write_plots
from services.rb_service import TruthCache, build_basis, build_truth_cache, export_error_curve, total_relative_error
from services.sampling_service import SelectionResult, TrainingMesh
from services.spacing_service import chebyshev_spacing_select, log_spacing_select, uniform_spacing_select
from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["algorithm", "n", "trial", "seed", "total_relative_error", "selection_seconds", "lambdas"]
SUMMARY_COLUMNS = ["algorithm", "n", "mean_error", "std_error", "mean_seconds", "std_seconds"]
RESULTS_FILE = "results.csv"
SUMMARY_FILE = "summary.csv"
CURVES_DIR = "curves"


@dataclass(frozen=True)
class Cell:
    algorithm: str
    n: int
    trial: int
    seed: int


@dataclass
class ExperimentRecord:
    algorithm: str
    n: int
    trial: int
    seed: int
    total_relative_error: float
    selection_seconds: float
    sample_set: Tuple[float, ...] = ()
    error_message: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error_message is not None

    @property
    def lambdas(self) -> str:
        return ";".join(f"{wavelength:.6f}" for wavelength in self.sample_set)

    def as_row(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "n": self.n,
            "trial": self.trial,
            "seed": self.seed,
            "total_relative_error": self.total_relative_error,
            "selection_seconds": self.selection_seconds,
            "lambdas": self.lambdas,
        }


@dataclass(frozen=True, eq=False)
class ExperimentContext:
    """Everything the cells share; read-only once built."""
    config: ExperimentConfig
    mesh: TriMesh
    blocks: AffineBlocks
    model: CoefficientModel
    training: TrainingMesh
    test_truths: TruthCache


@dataclass
class ExperimentOutcome:
    records: List[ExperimentRecord]
    results_path: Path
    summary_path: Path
    plot_paths: List[Path] = field(default_factory=list)
    run_id: Optional[object] = None

    @property
    def failures(self) -> List[ExperimentRecord]:
        return [record for record in self.records if record.failed]


def prepare_context(config: ExperimentConfig) -> ExperimentContext:
    """
    Offline phase: mesh, affine blocks, coefficient model and test-set truths.

    Raises:
        ConfigurationError: If the coefficient model violates its invariants
    """
    model = config.coefficient_model()
    problems = model.check_invariants()
    if problems:
        raise ConfigurationError("optics model: " + "; ".join(problems))

    started = time.perf_counter()
    mesh = generate_mesh(config.geometry_model(), config.mesh.target_elements, config.mesh.seed)
    blocks = build_problem(mesh, config.source_spec())
    test_truths = build_truth_cache(blocks, model, config.test_wavelengths())
    logger.info(
        f"Offline phase: {mesh.n_triangles} elements, {mesh.n_vertices} unknowns, "
        f"{len(test_truths)} test truths in {time.perf_counter() - started:.2f}s"
    )
    return ExperimentContext(config, mesh, blocks, model, config.training_mesh(), test_truths)


def plan_cells(config: ExperimentConfig) -> List[Cell]:
    """Stochastic selectors get `trials` cells per N seeded base_seed + trial; the rest get one."""
    harness = config.experiment
    cells = []
    for algorithm in harness.algorithms:
        trials = harness.trials if algorithm in STOCHASTIC_ALGORITHMS else 1
        for n in harness.sizes:
            for trial in range(trials):
                cells.append(Cell(algorithm, n, trial, harness.seed + trial))
    return cells


def select(context: ExperimentContext, algorithm: str, n: int, seed: int) -> SelectionResult:
    config = context.config
    lower, upper = config.parameter.lambda_min, config.parameter.lambda_max
    common = dict(reference_lambda=config.rb.reference_lambda, orthogonalize=config.rb.orthogonalize)

    if algorithm == "greedy":
        return greedy_select(context.blocks, context.model, context.training, config.stopping_rule("greedy", n),
                             indicator=config.greedy.indicator, rng_seed=seed, **common)
    if algorithm == "gradient":
        return gradient_select(context.blocks, context.model, context.training, config.stopping_rule("gradient", n),
                               rng_seed=seed, settings=config.gradient.build(), **common)
    if algorithm == "metropolis":
        return metropolis_select(context.blocks, context.model, context.training,
                                 config.metropolis_config(n, seed), **common)
    if algorithm == "log_spacing":
        return log_spacing_select(n, lower, upper)
    if algorithm == "uniform_spacing":
        return uniform_spacing_select(n, lower, upper)
    if algorithm == "chebyshev_spacing":
        return chebyshev_spacing_select(n, lower, upper)
    raise ConfigurationError(f"unknown algorithm {algorithm!r}")


def curve_path(output_dir: Path, cell: Cell) -> Path:
    return output_dir / CURVES_DIR / f"{cell.algorithm}_n{cell.n}_trial{cell.trial}.csv"


def run_cell(context: ExperimentContext, cell: Cell) -> ExperimentRecord:
    """Run one selector and score its basis on the test set. Failures become NaN records."""
    config = context.config
    try:
        result = select(context, cell.algorithm, cell.n, cell.seed)
        for warning in result.warnings:
            logger.warning(f"{cell.algorithm} N={cell.n} trial={cell.trial}: {warning}")
        rb = build_basis(context.blocks, context.model, result.sample_set,
                         config.rb.reference_lambda, config.rb.orthogonalize)
        error = total_relative_error(rb, context.test_truths)
        if config.experiment.error_curves:
            export_error_curve(rb, context.test_truths.wavelengths, curve_path(config.output_dir, cell),
                               truths=context.test_truths)
    except Exception as e:
        logger.error(f"{cell.algorithm} N={cell.n} trial={cell.trial} failed: {e}")
        return ExperimentRecord(cell.algorithm, cell.n, cell.trial, cell.seed, math.nan, math.nan,
                                error_message=f"{type(e).__name__}: {e}")

    logger.info(
        f"{cell.algorithm} N={cell.n} trial={cell.trial}: error {error:.3e}, "
        f"selection {result.wall_clock_seconds:.3f}s"
    )
    return ExperimentRecord(cell.algorithm, cell.n, cell.trial, cell.seed, error,
                            result.wall_clock_seconds, tuple(sorted(result.sample_set)))


def results_frame(records: List[ExperimentRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.as_row() for record in records], columns=RESULT_COLUMNS)


def summarize(results: pd.DataFrame) -> pd.DataFrame:
    """Mean and population standard deviation per (algorithm, N), NaN rows ignored."""
    if results.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)

    def spread(values: pd.Series) -> float:
        return float(values.std(ddof=0))

    summary = results.groupby(["algorithm", "n"], sort=False).agg(
        mean_error=("total_relative_error", "mean"),
        std_error=("total_relative_error", spread),
        mean_seconds=("selection_seconds", "mean"),
        std_seconds=("selection_seconds", spread),
    ).reset_index()
    return summary[SUMMARY_COLUMNS]


def store_run(config: ExperimentConfig, records: List[ExperimentRecord]):
    url = database_url(config.output_dir)
    init_db(url)
    with session_scope(url) as db:
        run = record_service.create_run(db, str(config.output_dir), config.to_json())
        for record in records:
            record_service.add_record(
                db, run.id, record.algorithm, record.n, record.trial, record.seed,
                record.total_relative_error, record.selection_seconds, record.lambdas, record.error_message,
            )
        return run.id


def run_experiment(config: ExperimentConfig, context: Optional[ExperimentContext] = None) -> ExperimentOutcome:
    """
    Run the configured comparison and write its artifacts into the output directory.

    Args:
        config: Validated experiment configuration
        context: Prebuilt offline data (built from `config` when omitted)

    Returns:
        ExperimentOutcome with one record per cell in plan order
    """
    output_dir = config.output_dir
    output_dir.mkdir(parents=True, exist_ok=True)
    if config.experiment.error_curves:
        (output_dir / CURVES_DIR).mkdir(exist_ok=True)
    context = context if context is not None else prepare_context(config)

    cells = plan_cells(config)
    logger.info(f"Running {len(cells)} cells on {config.experiment.workers} workers")
    if config.experiment.workers > 1:
        logger.warning("Cells share one interpreter and one Riesz factorization; "
                       "selection_seconds include time spent waiting on other cells")
    with ThreadPoolExecutor(max_workers=config.experiment.workers) as executor:
        records = list(executor.map(partial(run_cell, context), cells))

    results = results_frame(records)
    summary = summarize(results)
    results_path = output_dir / RESULTS_FILE
    summary_path = output_dir / SUMMARY_FILE
    results.to_csv(results_path, index=False)
    summary.to_csv(summary_path, index=False)

    plot_paths = write_plots(summary, output_dir) if summary["mean_error"].notna().any() else []
    run_id = store_run(config, records)
    logger.info(f"Wrote {results_path} ({len(records)} rows) and {summary_path}")
    return ExperimentOutcome(records, results_path, summary_path, plot_paths, run_id)

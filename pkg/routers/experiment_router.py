"""
Experiment commands: run the selector comparison and the invariant suite.
"""
import logging
from pathlib import Path
from typing import Optional

import typer

from config import apply_overrides, load_config
from services.experiment_service import run_experiment
from services.validation_service import FAIL, PASS, validate_suite
from utils.cli import EXIT_INVARIANT, EXIT_RUNTIME, exit_codes
from utils.config_parser import split_names, split_numbers
from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

router = typer.Typer()

STATUS_MARKS = {PASS: "✓", FAIL: "✗"}


def _parse_sizes(value: Optional[str]):
    if value is None:
        return None
    numbers = split_numbers(value)
    if not numbers or any(n != int(n) for n in numbers):
        raise ConfigurationError(f"--sizes expects comma separated integers, got {value!r}")
    return [int(n) for n in numbers]


@router.command("run")
def run(
    config: Path = typer.Option(..., "--config", help="Experiment configuration file"),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory (overrides experiment.output_dir)"),
    algorithms: Optional[str] = typer.Option(None, "--algorithms", help="Comma separated selector names"),
    sizes: Optional[str] = typer.Option(None, "--sizes", help="Comma separated basis sizes"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed; trial t uses seed + t"),
    curves: bool = typer.Option(False, "--curves", help="Also write per-wavelength error curves under curves/"),
):
    """Run every selector over the basis-size grid and write results, summary and plots."""
    with exit_codes():
        settings = apply_overrides(
            load_config(config),
            out=out,
            algorithms=split_names(algorithms) if algorithms is not None else None,
            sizes=_parse_sizes(sizes),
            seed=seed,
            error_curves=True if curves else None,
        )
        outcome = run_experiment(settings)
        summary = outcome.summary_path.read_text(encoding="utf-8")

    typer.echo(summary)
    typer.echo(f"✓ {len(outcome.records)} records written to {outcome.results_path}")
    if outcome.failures:
        typer.echo(f"⚠ {len(outcome.failures)} of {len(outcome.records)} cells failed; see the log", err=True)
        if len(outcome.failures) == len(outcome.records):
            raise typer.Exit(EXIT_RUNTIME)


@router.command("validate")
def validate(config: Path = typer.Option(..., "--config", help="Experiment configuration file")):
    """Run the invariant suite; exits 2 when any check fails."""
    with exit_codes():
        report = validate_suite(load_config(config))

    for check in report.checks:
        typer.echo(f"{STATUS_MARKS.get(check.status, '-')} {check.name}: {check.status} ({check.detail})")
    if not report.passed:
        typer.echo(f"✗ {len(report.failures)} check(s) failed", err=True)
        raise typer.Exit(EXIT_INVARIANT)
    typer.echo("✓ All checks passed")

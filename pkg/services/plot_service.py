"""
Vector plots of the experiment summary: total relative error against basis
size (log scale) and selection time against basis size.
"""
import logging
from pathlib import Path
from typing import List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

ERROR_PLOT = "error_vs_n.svg"
TIME_PLOT = "time_vs_n.svg"


def _plot(summary: pd.DataFrame, column: str, spread: str, ylabel: str, path: Path, log_y: bool) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    try:
        for algorithm, rows in summary.groupby("algorithm", sort=False):
            rows = rows.sort_values("n")
            values = rows[column]
            if log_y:
                values = values.where(values > 0)
            ax.errorbar(rows["n"], values, yerr=rows[spread], marker="o", capsize=3, label=algorithm)
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel("basis size N")
        ax.set_ylabel(ylabel)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg")
    finally:
        plt.close(fig)
    return path


def plot_errors(summary: pd.DataFrame, path: Union[str, Path]) -> Path:
    return _plot(summary, "mean_error", "std_error", "total relative error", Path(path), log_y=True)


def plot_times(summary: pd.DataFrame, path: Union[str, Path]) -> Path:
    return _plot(summary, "mean_seconds", "std_seconds", "selection time (s)", Path(path), log_y=False)


def write_plots(summary: pd.DataFrame, output_dir: Union[str, Path]) -> List[Path]:
    """Write both summary plots into `output_dir` and return their paths."""
    output_dir = Path(output_dir)
    paths = [
        plot_errors(summary, output_dir / ERROR_PLOT),
        plot_times(summary, output_dir / TIME_PLOT),
    ]
    logger.info(f"Wrote plots {[p.name for p in paths]}")
    return paths

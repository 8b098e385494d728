from sqlalchemy.orm import Session
from models import ExperimentRecordRow, ExperimentRun
from typing import List, Optional
import math
import uuid


def create_run(db: Session, output_dir: str, config_json: str) -> ExperimentRun:
    """
    Create a ledger entry for a new harness run.

    Args:
        db: Database session
        output_dir: Directory receiving the run's CSV and plot files
        config_json: Effective configuration, serialized

    Returns:
        Created ExperimentRun object
    """
    run = ExperimentRun(id=uuid.uuid4(), output_dir=output_dir, config_json=config_json)
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def add_record(db: Session, run_id: uuid.UUID, algorithm: str, n: int, trial: int, seed: int,
               total_relative_error: float, selection_seconds: float, lambdas: str,
               error_message: Optional[str] = None) -> ExperimentRecordRow:
    """
    Store one experiment cell. NaN values are stored as NULL.

    Args:
        db: Database session
        run_id: Run UUID
        algorithm, n, trial, seed: Cell coordinates
        total_relative_error: Error over the test set (NaN for failed cells)
        selection_seconds: Selection wall clock (NaN for failed cells)
        lambdas: Selected wavelengths as written to results.csv
        error_message: Failure message, if the cell failed

    Returns:
        Created ExperimentRecordRow object
    """
    def nullable(value: float) -> Optional[float]:
        return None if value is None or math.isnan(value) else float(value)

    record = ExperimentRecordRow(
        id=uuid.uuid4(),
        run_id=run_id,
        algorithm=algorithm,
        n=n,
        trial=trial,
        seed=seed,
        total_relative_error=nullable(total_relative_error),
        selection_seconds=nullable(selection_seconds),
        lambdas=lambdas,
        error_message=error_message,
    )
    db.add(record)
    db.commit()
    return record


def get_run_records(db: Session, run_id: uuid.UUID) -> List[ExperimentRecordRow]:
    """
    Get all records of a run, ordered by algorithm, N and trial.
    """
    return db.query(ExperimentRecordRow).filter(
        ExperimentRecordRow.run_id == run_id
    ).order_by(
        ExperimentRecordRow.algorithm, ExperimentRecordRow.n, ExperimentRecordRow.trial
    ).all()

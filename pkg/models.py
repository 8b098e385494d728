from sqlalchemy import Column, String, Integer, Float, Text, DateTime, ForeignKey, Index, Uuid
from sqlalchemy.orm import relationship, declarative_base
from datetime import datetime
import uuid

Base = declarative_base()


class ExperimentRun(Base):
    """One invocation of the experiment harness"""
    __tablename__ = "experiment_runs"

    id = Column(Uuid(as_uuid=True), primary_key=True, default=uuid.uuid4)
    output_dir = Column(String(500), nullable=False)
    config_json = Column(Text, nullable=False)
    created_at = Column(DateTime, default=datetime.utcnow, nullable=False, index=True)

    records = relationship("ExperimentRecordRow", back_populates="run", cascade="all, delete-orphan",
                           order_by="ExperimentRecordRow.algorithm, ExperimentRecordRow.n, ExperimentRecordRow.trial")

    def __repr__(self):
        return f"<ExperimentRun(id={self.id}, output_dir={self.output_dir})>"


class ExperimentRecordRow(Base):
    """One (algorithm, N, trial) cell of a run"""
    __tablename__ = "experiment_records"

    id = Column(Uuid(as_uuid=True), primary_key=True, default=uuid.uuid4)
    run_id = Column(Uuid(as_uuid=True), ForeignKey("experiment_runs.id"), nullable=False, index=True)
    algorithm = Column(String(40), nullable=False)
    n = Column(Integer, nullable=False)
    trial = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    # NULL when the cell failed
    total_relative_error = Column(Float, nullable=True)
    selection_seconds = Column(Float, nullable=True)
    lambdas = Column(Text, nullable=False, default="")
    error_message = Column(Text, nullable=True)

    run = relationship("ExperimentRun", back_populates="records")

    def __repr__(self):
        return f"<ExperimentRecordRow(run_id={self.run_id}, algorithm={self.algorithm}, n={self.n}, trial={self.trial})>"


Index("idx_record_run_algorithm", ExperimentRecordRow.run_id, ExperimentRecordRow.algorithm, ExperimentRecordRow.n)

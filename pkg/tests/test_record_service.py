import math

import pytest

from database import init_db, session_scope
from services import record_service


@pytest.fixture
def ledger_url(tmp_path):
    url = f"sqlite:///{tmp_path / 'ledger.db'}"
    init_db(url)
    return url


def test_records_round_trip_with_nan_as_null(ledger_url):
    with session_scope(ledger_url) as db:
        run = record_service.create_run(db, "results", "{}")
        record_service.add_record(db, run.id, "greedy", 5, 1, 1, 0.25, 1.5, "600.000000;700.000000")
        record_service.add_record(db, run.id, "greedy", 5, 0, 0, math.nan, math.nan, "", "SolverError: boom")
        run_id = run.id

    with session_scope(ledger_url) as db:
        rows = record_service.get_run_records(db, run_id)

    assert [row.trial for row in rows] == [0, 1]
    assert rows[0].total_relative_error is None
    assert rows[0].error_message == "SolverError: boom"
    assert rows[1].total_relative_error == pytest.approx(0.25)
    assert rows[1].lambdas == "600.000000;700.000000"

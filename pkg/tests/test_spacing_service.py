import numpy as np
import pytest
from hypothesis import given, strategies as st

from services.spacing_service import (
    chebyshev_spacing_select,
    log_spacing_points,
    log_spacing_select,
    uniform_spacing_select,
)


def test_log_spacing_pins_both_endpoints():
    points = log_spacing_points(7)
    assert points[0] == 600.0
    assert points[-1] == 1000.0


def test_log_spacing_clusters_at_lower_end():
    assert log_spacing_points(3)[1] == pytest.approx(600.0853, abs=1e-3)


def test_single_log_point_is_lambda_min():
    result = log_spacing_select(1)
    assert result.sample_set == (600.0,)
    assert result.algorithm == "log_spacing"


def test_empty_size_is_rejected():
    with pytest.raises(ValueError):
        log_spacing_points(0)


@given(n=st.integers(min_value=2, max_value=60), sigma_bar=st.floats(min_value=1e-3, max_value=1e6))
def test_log_spacing_is_strictly_increasing(n, sigma_bar):
    points = log_spacing_points(n, sigma_bar=sigma_bar)
    assert len(points) == n
    assert np.all(np.diff(points) > 0)
    assert points.min() >= 600.0 and points.max() <= 1000.0


def test_uniform_spacing():
    assert uniform_spacing_select(5).sample_set == (600.0, 700.0, 800.0, 900.0, 1000.0)
    assert uniform_spacing_select(1).sample_set == (800.0,)


def test_chebyshev_spacing_is_symmetric_and_denser_at_the_ends():
    points = np.array(chebyshev_spacing_select(6).sample_set)
    gaps = np.diff(points)

    assert points[0] == 600.0 and points[-1] == 1000.0
    np.testing.assert_allclose(points + points[::-1], 1600.0)
    assert gaps[0] < gaps[len(gaps) // 2]

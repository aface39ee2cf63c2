import numpy as np
import pytest
from hypothesis import given, strategies as st

from micropolar.quadrature import ball_rule, radial_rule, sphere_rule
from micropolar.series import NormSeries

finite = st.floats(-1e300, 1e300, allow_nan=False)


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=20))
def test_csv_round_trip_is_exact(rows):
    s = NormSeries.from_rows(["t", "l2_u"], rows)
    back = NormSeries.from_csv(s.to_csv())
    assert np.array_equal(back.t, s.t) and np.array_equal(back["l2_u"], s["l2_u"])


def test_csv_errors(tmp_path):
    with pytest.raises(ValueError, match="start with 't'"):
        NormSeries.from_csv("x,y\n1,2\n")
    with pytest.raises(ValueError, match="line 3"):
        NormSeries.from_csv("t,y\n1,2\n3\n")
    with pytest.raises(ValueError, match="missing"):
        NormSeries.from_csv("t,y\n1,2\n", required=("t", "l2_u"))
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(ValueError):
        NormSeries.from_csv(tmp_path / "e.csv")


def test_window_and_lookup():
    s = NormSeries({"t": np.arange(5.0), "y": np.arange(5.0) ** 2})
    w = s.window(1, 3)
    assert list(w.t) == [1, 2, 3] and "y" in w and len(w) == 3
    with pytest.raises(KeyError, match="have"):
        s["z"]


def test_quadrature_rules():
    r, w = radial_rule(64, 1e-6, 10.0)
    assert np.dot(w, r ** 2) == pytest.approx((1e3 - 1e-18) / 3, rel=1e-9)
    d, wd = sphere_rule(8, 16)
    assert wd.sum() == pytest.approx(4 * np.pi)
    assert np.dot(wd, d[:, 2] ** 2) == pytest.approx(4 * np.pi / 3)
    xi, wb = ball_rule(256, 8, 16, 1e-8, 12.0)
    g = np.exp(-np.sum(xi ** 2, axis=1))
    assert np.dot(wb, g) == pytest.approx(np.pi ** 1.5, rel=1e-10)
    with pytest.raises(ValueError):
        radial_rule(0, 1e-3, 1.0)

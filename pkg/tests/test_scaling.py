import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from routescale.scaling import (
    compute_frontier,
    exponent_from_doubling,
    fit_power_law,
    fit_power_law_cov,
    fit_series,
    group_series,
    load_fixture,
    predict_gap,
    read_points,
    summarize,
    write_fits,
    write_plot_data,
)
from routescale.scaling.fit import PowerLawFit, ScalingPoint

# frozen from numpy.polyfit on the log-log pairs (a separate least-squares routine)
UNIFORM100_EXPONENT = 0.05723101306638388
LRM1B_TRAJ_EXPONENT = 0.10736429597373631


def test_synthetic_exact():
    x = np.array([10.0, 100.0, 1000.0])
    f = fit_power_law(x, x ** -0.1)
    assert f.exponent == pytest.approx(0.1, abs=1e-12)
    assert f.r_squared == pytest.approx(1.0, abs=1e-12) and f.n_points == 3


def test_model_size_uniform100():
    pts = [p for p in load_fixture("table5") if p.label == "Uniform100"]
    f = fit_power_law([p.x for p in pts], [p.gap for p in pts])
    assert f.exponent == pytest.approx(UNIFORM100_EXPONENT, abs=1e-12)


def test_trajectory_series_lrm1b():
    pts = [p for p in load_fixture("table6", "T") if p.label == "1B|aug=0"]
    f = fit_power_law([p.x for p in pts], [p.gap for p in pts])
    assert [p.x for p in pts] == [10, 50, 100]
    assert f.exponent == pytest.approx(LRM1B_TRAJ_EXPONENT, abs=1e-12)
    assert f.doubling_ratio == pytest.approx(0.928, abs=5e-4)


def test_predict_examples():
    x = np.array([2.0, 8.0, 32.0])
    f = fit_power_law(x, 5 * x ** -0.3)
    assert predict_gap(f, 8.0) == pytest.approx(5 * 8.0 ** -0.3, rel=1e-12)
    other = PowerLawFit(0.21, 1.3, 0.9, 4)
    for xv in (0.5, 3.0, 1e6):
        assert predict_gap(other, 2 * xv) / predict_gap(other, xv) == pytest.approx(2 ** -0.21, rel=1e-12)
    assert PowerLawFit(0.066, 0.0, 1.0, 2).doubling_ratio == pytest.approx(0.955, abs=5e-4)
    assert exponent_from_doubling(2 ** -0.066) == pytest.approx(0.066)
    with pytest.raises(ValueError):
        predict_gap(other, 0.0)


def test_summarize():
    f = PowerLawFit(0.1, 2.0, 0.97, 4, "a")
    s = summarize({"N": [f]})["N"]
    assert s.mean_exponent == 0.1 and s.r_squared == [0.97]
    with pytest.raises(ValueError):
        summarize({"T": []})


def test_model_size_mean_exponent():
    fits = fit_series(load_fixture("table5"))
    assert len(fits) == 6
    assert 0.060 <= summarize({"N": fits})["N"].mean_exponent <= 0.072


@pytest.mark.parametrize("x,g", [([1, -2], [1, 2]), ([1, 2], [0, 2]), ([3, 3], [1, 2]), ([1, 2, 3], [1, 2])])
def test_fit_errors(x, g):
    with pytest.raises(ValueError):
        fit_power_law(x, g)


positive = st.floats(1e-3, 1e6, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(positive, st.floats(0.01, 100)), min_size=3, max_size=12, unique_by=lambda t: t[0]),
       st.floats(1e-3, 1e3))
def test_invariances_and_dual_paths(data, k):
    x, g = map(np.array, zip(*data))
    if np.ptp(np.log(x)) < 1e-3:
        return
    base = fit_power_law(x, g)
    cov = fit_power_law_cov(x, g)
    assert abs(base.exponent - cov.exponent) <= 1e-10 * max(1.0, abs(base.exponent))
    assert abs(base.intercept - cov.intercept) <= 1e-10 * max(1.0, abs(base.intercept))
    assert abs(base.r_squared - cov.r_squared) <= 1e-9
    assert abs(fit_power_law(k * x, g).exponent - base.exponent) <= 1e-12 * max(1.0, abs(base.exponent)) * 1e3
    assert abs(fit_power_law(x, k * g).exponent - base.exponent) <= 1e-12 * max(1.0, abs(base.exponent)) * 1e3


def test_scale_invariance_tight():
    x, g = np.array([1.3e6, 5.0e6, 3.89e7, 1.1e9]), np.array([4.379, 3.836, 3.207, 2.960])
    a = fit_power_law(x, g).exponent
    assert abs(fit_power_law(7.5 * x, g).exponent - a) <= 1e-12
    assert abs(fit_power_law(x, 0.01 * g).exponent - a) <= 1e-12


def test_r_squared_one_iff_exact():
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    assert fit_power_law(x, 3 * x ** -0.2).r_squared == pytest.approx(1.0, abs=1e-12)
    noisy = 3 * x ** -0.2 * np.array([1.0, 1.02, 0.99, 1.01, 1.0])
    assert fit_power_law(x, noisy).r_squared < 1 - 1e-6


def test_read_points_layouts(tmp_path):
    assert {p.label for p in load_fixture("table7", "C")} == {f"{m}|aug={a}" for m in ("1M", "5M", "40M", "1B") for a in (0, 1)}
    assert len(group_series(load_fixture("table8", "T"))) == 8
    with pytest.raises(ValueError, match="law T or C"):
        load_fixture("table6")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="unrecognised"):
        read_points(bad)


def test_frontier_keeps_strict_improvements():
    pts = [ScalingPoint(x, g, "s") for x, g in [(1, 5.0), (2, 5.5), (3, 4.0), (4, 4.0), (5, 3.0)]]
    assert [(p.x, p.gap) for p in compute_frontier(pts)] == [(1, 5.0), (3, 4.0), (5, 3.0)]


def test_outputs(tmp_path):
    pts = load_fixture("table5")
    fits = fit_series(pts)
    write_fits(fits, tmp_path / "fits.csv", "N")
    write_plot_data(pts, fits, tmp_path / "plot.csv")
    with open(tmp_path / "fits.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6 and rows[0]["law"] == "N"
    with open(tmp_path / "plot.csv") as fh:
        plot = list(csv.DictReader(fh))
    assert len(plot) == 24 and set(plot[0]) == {"label", "x", "gap", "fitted_gap"}

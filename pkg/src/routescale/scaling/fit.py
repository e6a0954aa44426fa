"""Power-law fits ``G = exp(intercept) * x ** (-a)`` by least squares in log-log space.

Natural logarithms throughout; ``intercept`` is ln G at x = 1.
"""
from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LAWS = ("N", "T", "C")
FIXTURES = {
    "table5": "table5_model_size.csv",
    "table6": "table6_uniform100.csv",
    "table7": "table7_ood100.csv",
    "table8": "table8_ood200.csv",
}
FIXTURES_VERSION = 1


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    intercept: float
    r_squared: float
    n_points: int
    label: str = ""

    @property
    def doubling_ratio(self) -> float:
        """Gap multiplier when x doubles."""
        return 2.0 ** (-self.exponent)


@dataclass(frozen=True)
class ScalingPoint:
    x: float
    gap: float
    label: str


def _log_arrays(x, gap):
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(gap, dtype=np.float64)
    if x.shape != g.shape or x.ndim != 1:
        raise ValueError("x and gap must be 1-d arrays of equal length")
    if (x <= 0).any() or (g <= 0).any():
        raise ValueError("power-law fit needs positive x and gap")
    if np.unique(x).size < 2:
        raise ValueError("need at least 2 distinct x values")
    return np.log(x), np.log(g)


def fit_power_law(x: Sequence[float], gap: Sequence[float], label: str = "") -> PowerLawFit:
    """OLS on (ln x, ln G) via the normal equations."""
    lx, lg = _log_arrays(x, gap)
    A = np.column_stack([np.ones_like(lx), lx])
    intercept, slope = np.linalg.solve(A.T @ A, A.T @ lg)
    resid = lg - (intercept + slope * lx)
    ss_tot = float(((lg - lg.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return PowerLawFit(float(-slope), float(intercept), min(max(r2, 0.0), 1.0), lx.size, label)


def fit_power_law_cov(x: Sequence[float], gap: Sequence[float], label: str = "") -> PowerLawFit:
    """Same fit from centred moments: slope = cov(ln x, ln G) / var(ln x)."""
    lx, lg = _log_arrays(x, gap)
    dx, dg = lx - lx.mean(), lg - lg.mean()
    sxx, sxy, syy = float(dx @ dx), float(dx @ dg), float(dg @ dg)
    slope = sxy / sxx
    r2 = 1.0 if syy == 0.0 else sxy * sxy / (sxx * syy)
    return PowerLawFit(-slope, float(lg.mean() - slope * lx.mean()), min(max(r2, 0.0), 1.0), lx.size, label)


def predict_gap(fit: PowerLawFit, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    if (x <= 0).any():
        raise ValueError("x must be positive")
    out = np.exp(fit.intercept - fit.exponent * np.log(x))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LawSummary:
    law: str
    mean_exponent: float
    fits: tuple

    @property
    def r_squared(self) -> list:
        return [f.r_squared for f in self.fits]


def summarize(fits_by_law: dict) -> dict:
    """Mean exponent per law; each value keeps its fits for the per-fit R^2 listing."""
    out = {}
    for law, fits in fits_by_law.items():
        fits = tuple(fits)
        if not fits:
            raise ValueError(f"no fits for law {law}")
        out[law] = LawSummary(law, float(np.mean([f.exponent for f in fits])), fits)
    return out


# -- tables ----------------------------------------------------------------

def read_points(path, law: str | None = None) -> list:
    """Read a scaling table.

    Accepts the plain ``x,gap,label`` layout, or the inference-table layout
    ``model,m,aug,traj,gflops,gap`` where ``law`` picks ``traj`` (T) or
    ``gflops`` (C) as x and each (model, aug) pair is one series.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return []
    cols = set(rows[0])
    if {"x", "gap"} <= cols:
        return [ScalingPoint(float(r["x"]), float(r["gap"]), r.get("label", "") or "") for r in rows]
    if {"model", "aug", "traj", "gflops", "gap"} <= cols:
        if law not in ("T", "C"):
            raise ValueError("inference tables need law T or C")
        key = "traj" if law == "T" else "gflops"
        return [ScalingPoint(float(r[key]), float(r["gap"]),
                             f"{r['model']}|aug={int(r['aug'])}") for r in rows]
    raise ValueError(f"{path}: unrecognised columns {sorted(cols)}")


def group_series(points: Iterable[ScalingPoint]) -> "OrderedDict[str, list]":
    series = OrderedDict()
    for p in points:
        series.setdefault(p.label, []).append(p)
    return series


def fit_series(points: Iterable[ScalingPoint]) -> list:
    return [fit_power_law([p.x for p in ps], [p.gap for p in ps], label)
            for label, ps in group_series(points).items()]


def compute_frontier(points: Iterable[ScalingPoint], label: str = "frontier") -> list:
    """Points not beaten by any cheaper point (strictly lower gap than all cheaper ones)."""
    out, best = [], math.inf
    for p in sorted(points, key=lambda p: (p.x, p.gap)):
        if p.gap < best:
            best = p.gap
            out.append(ScalingPoint(p.x, p.gap, label))
    return out


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("routescale.scaling") / "data" / FIXTURES[name]))


def load_fixture(name: str, law: str | None = None) -> list:
    return read_points(fixture_path(name), law)


def write_fits(fits: Sequence[PowerLawFit], path, law: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["law", "label", "exponent", "intercept_ln", "r_squared", "n_points", "doubling_ratio"])
        for f in fits:
            w.writerow([law, f.label, repr(f.exponent), repr(f.intercept), repr(f.r_squared),
                        f.n_points, repr(f.doubling_ratio)])


def write_plot_data(points: Sequence[ScalingPoint], fits: Sequence[PowerLawFit], path) -> None:
    by_label = {f.label: f for f in fits}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "x", "gap", "fitted_gap"])
        for p in points:
            w.writerow([p.label, repr(p.x), repr(p.gap), repr(predict_gap(by_label[p.label], p.x))])


def exponent_from_doubling(ratio: float) -> float:
    return -math.log2(ratio)

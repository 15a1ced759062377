"""Impact sweeps and log-log scaling fits."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import stats

from . import green, pde
from .core import MetaorderSpec, ModelParams

ENGINES = ("pde", "green")


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    n: int
    decades: float

    def within(self, target, tolerance) -> bool:
        return abs(self.slope - target) <= tolerance

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "stderr": self.stderr,
                "ci95": [self.ci_low, self.ci_high], "n": self.n, "decades": self.decades}


def loglog_fit(x, y, level=0.95) -> ScalingFit:
    """OLS slope of ``log y`` on ``log x`` with a t-based confidence interval."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 3:
        raise ValueError("need at least 3 points for a scaling fit")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive values")
    res = stats.linregress(np.log(x), np.log(y))
    half = stats.t.ppf(0.5 + level / 2, x.size - 2) * res.stderr
    return ScalingFit(slope=float(res.slope), intercept=float(res.intercept), stderr=float(res.stderr),
                      ci_low=float(res.slope - half), ci_high=float(res.slope + half), n=int(x.size),
                      decades=float(math.log10(x.max() / x.min())))


def check_sweep_axis(values, min_points=6, min_decades=2.0):
    values = np.asarray(values, float)
    if values.size < min_points:
        raise ValueError(f"a sweep needs at least {min_points} points, got {values.size}")
    if np.any(values <= 0):
        raise ValueError("sweep values must be positive")
    decades = math.log10(values.max() / values.min())
    if decades < min_decades - 1e-9:
        raise ValueError(f"a sweep must span at least {min_decades} decades, got {decades:.2f}")


def peak_impact(Q, params: ModelParams, T: float, engine: str = "pde", t_end=None, **kw) -> float:
    """Impact at the end of execution of ``Q`` over ``T``."""
    order = MetaorderSpec(Q, T)
    t_end = 2.0 * T if t_end is None else t_end
    if engine == "pde":
        grid = pde.default_grid(params, T, t_end, Q, **kw)
        return pde.run_metaorder(params, grid, order, t_end).peak
    if engine == "green":
        return green.solve_trajectory(params, order, t_end, **kw).peak
    raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")


def q_sweep(params: ModelParams, T: float, Qs, engine: str = "pde", workers: int = 1, **kw):
    """Peak impacts for every ``Q``; results come back in input order whatever the pool does."""
    Qs = [float(q) for q in Qs]
    run = partial(peak_impact, params=params, T=T, engine=engine, **kw)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            peaks = list(pool.map(run, Qs))
    else:
        peaks = [run(q) for q in Qs]
    return np.asarray(peaks)

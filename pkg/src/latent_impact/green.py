"""Green-function route to the price trajectory.

The signed book is written through the diffusion kernel with decay

    G(x, t) = 1{t > 0} exp(-x**2 / (4 sigma1**2 t) - nu t) / sqrt(4 pi sigma1**2 t)

as the sum of the evolved initial book, the metaorder contribution
``m int_0^{min(t,T)} G(x - x_tau, t - tau) dtau`` and the renewal term
``-lam int_0^t erf((x - x_tau) / sqrt(4 sigma1**2 (t - tau))) exp(-nu (t - tau)) dtau``.
The price is the root ``phi(x_t, t) = 0``, solved marching forward in time.

The evolved initial book is ``G * phi_st``, which is not ``phi_st exp(-nu t)``
unless the book is linear. With a price that never moves the full solution
must stay at ``phi_st``, so the default ("exact") evaluation uses

    phi = phi_st(x) + metaorder term
          - lam int_0^t [erf((x - x_tau)/...) - erf(x/...)] exp(-nu (t - tau)) dtau

which is the same function written without the large cancelling pieces.
``form="literal"`` keeps the ``phi_st(x) exp(-nu t)`` version for comparison.

All history integrals are done in ``u = sqrt(t - tau)``, which removes the
``1/sqrt(t - tau)`` endpoint singularity, with Gauss-Legendre panels
between consecutive history times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special

from .closed_form import stationary_book
from .core import MetaorderSpec, ModelParams
from .pde import ImpactTrajectory, NumericalError, plateau_level

FORMS = ("exact", "literal")


def kernel(x, t, params: ModelParams):
    """``G_nu(x, t)``; identically zero for ``t <= 0``."""
    x = np.asarray(x, float)
    t = np.asarray(t, float)
    s2 = params.sigma1**2
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.exp(-x**2 / (4.0 * s2 * t) - params.nu * t) / np.sqrt(4.0 * math.pi * s2 * t)
    out = np.where(t > 0, val, 0.0)
    return float(out) if out.ndim == 0 else out


def kernel_mass(t, params: ModelParams, n=4001):
    """Spatial integral of the kernel by the trapezoidal rule over +-12 diffusion lengths."""
    if t <= 0:
        return 0.0
    half = 12.0 * params.sigma1 * math.sqrt(2.0 * t)
    x = np.linspace(-half, half, n)
    return float(np.trapezoid(kernel(x, t, params), x))


@dataclass
class PriceHistory:
    """Piecewise-linear price path on ``times`` (starting at 0 with price 0)."""

    times: np.ndarray
    prices: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.prices = np.asarray(self.prices, float)
        if self.times.shape != self.prices.shape or self.times.size == 0:
            raise ValueError("times and prices must be non-empty and of equal length")
        if self.times[0] != 0.0 or self.prices[0] != 0.0:
            raise ValueError("history must start at t = 0 with x_0 = 0")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("history times must be strictly increasing")

    def __call__(self, tau):
        return np.interp(tau, self.times, self.prices)

    @classmethod
    def flat(cls, t_end, n=2):
        return cls(np.linspace(0.0, t_end, n), np.zeros(n))

    def to_trajectory(self, params, order, t_end=None, extra=None) -> ImpactTrajectory:
        meta = {"engine": "green", "params": params.as_dict(),
                "metaorder": {"Q": order.Q, "T": order.T, "rate": order.rate},
                "t_end": float(self.times[-1]), "x0": 0.0,
                "diagnostics": dict(self.diagnostics)}
        if extra:
            meta.update(extra)
        peak = float(np.interp(order.T, self.times, self.prices))
        return ImpactTrajectory(times=self.times, impact=self.prices, T=order.T, peak=peak,
                                plateau=plateau_level(self.times, self.prices, t_end), metadata=meta)


def _gauss(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _u_panels(t, breaks, n_gauss):
    """Gauss nodes in ``u = sqrt(t - tau)`` for the panels between ``breaks``.

    Returns ``(tau, u, w_u)``, with ``w_u`` the weights in ``u``.
    """
    breaks = np.asarray(breaks, float)
    ub = np.sqrt(np.maximum(t - breaks, 0.0))
    lo, hi = ub[1:], ub[:-1]
    g, w = _gauss(n_gauss)
    u = lo[:, None] + (hi - lo)[:, None] * g[None, :]
    wu = (hi - lo)[:, None] * w[None, :]
    return t - u**2, u, wu


def _breaks(history_times, t, T=None):
    b = history_times[history_times < t]
    pts = [b, [t]]
    if T is not None and 0 < T < t and not np.any(np.isclose(b, T, rtol=0, atol=1e-14)):
        pts.append([T])
    return np.unique(np.concatenate(pts))


def _metaorder_integrand(dx, u, params):
    # G(dx, u^2) * 2u, finite as u -> 0 whenever dx = O(u^2)
    s = params.sigma1
    with np.errstate(divide="ignore", over="ignore"):
        arg = dx**2 / (4.0 * s * s * u * u)
    return np.exp(-arg - params.nu * u * u) / (s * math.sqrt(math.pi))


def phi_at(x, t, params: ModelParams, order: MetaorderSpec, history: PriceHistory,
           form: str = "exact", n_gauss: int = 16) -> float:
    """Signed latent density at price ``x`` and time ``t`` given the price history."""
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t > history.times[-1] * (1 + 1e-12):
        raise ValueError("history does not cover [0, t]")
    base = _base_book(x, t, params, form)
    if t == 0:
        return base
    breaks = _breaks(history.times, t, order.T)
    tau, u, wu = _u_panels(t, breaks, n_gauss)
    xt = history(tau)
    total = base
    m = order.rate
    if m:
        live = tau < order.T
        total += m * np.sum((wu * _metaorder_integrand(x - xt, u, params))[live])
    if params.lam:
        total -= params.lam * np.sum(wu * _renewal_integrand(x, xt, u, params, form))
    return float(total)


def _base_book(x, t, params, form):
    if params.nu == 0:
        return -params.L * x
    st = stationary_book(params, x)
    return st * math.exp(-params.nu * t) if form == "literal" else st


def _renewal_integrand(x, xt, u, params, form):
    s = params.sigma1
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (x - xt) / (2.0 * s * u)
        bracket = special.erf(z)
        if form == "exact":
            bracket = bracket - special.erf(x / (2.0 * s * u))
    return 2.0 * u * bracket * np.exp(-params.nu * u * u)


def time_grid(T: float, t_end: float, n_exec: int = 200, growth: float = 1.03,
              dt_max: Optional[float] = None) -> np.ndarray:
    """Uniform steps over the execution, geometrically growing steps afterwards."""
    if not t_end >= T > 0:
        raise ValueError("need 0 < T <= t_end")
    ts = list(np.linspace(0.0, T, n_exec + 1))
    dt = T / n_exec
    t = T
    while t < t_end * (1 - 1e-12):
        dt = dt * growth if dt_max is None else min(dt * growth, dt_max)
        t = min(t + dt, t_end)
        if t_end - t < 0.25 * dt:
            t = t_end
        ts.append(t)
    return np.unique(np.asarray(ts))


def refine_time_grid(t_grid, factor=2):
    """Insert ``factor - 1`` equally spaced points inside every interval."""
    t_grid = np.asarray(t_grid, float)
    frac = np.arange(factor) / factor
    inner = t_grid[:-1, None] + np.diff(t_grid)[:, None] * frac[None, :]
    return np.concatenate([inner.ravel(), t_grid[-1:]])


class _StepQuadrature:
    """Quadrature at one time level with the newest history point left free."""

    def __init__(self, params, order, times, prices, n, n_gauss, form):
        self.params = params
        self.m = order.rate
        t = times[n]
        self.t = t
        tau, u, wu = _u_panels(t, times[: n + 1], n_gauss)
        # every panel lies entirely before or after T because T is a grid node
        self.live = (tau < order.T)
        # rows are panels; the last row lies in [t_{n-1}, t_n] where the price is unknown
        known = np.interp(tau, times[:n], prices[:n])
        self.frac = (tau[-1] - times[n - 1]) / (t - times[n - 1])
        self.x_prev = prices[n - 1]
        self.known = known
        self.u = u
        self.wu = wu
        self.form = form

    def history(self, x):
        xt = self.known.copy()
        xt[-1] = self.x_prev + (x - self.x_prev) * self.frac
        return xt

    def metaorder(self, x):
        if not self.m:
            return 0.0
        xt = self.history(x)
        vals = self.wu * _metaorder_integrand(x - xt, self.u, self.params)
        return self.m * float(np.sum(vals[self.live]))

    def residual(self, x):
        p = self.params
        total = _base_book(x, self.t, p, self.form) + self.metaorder(x)
        if p.lam:
            xt = self.history(x)
            total -= p.lam * float(np.sum(self.wu * _renewal_integrand(x, xt, self.u, p, self.form)))
        return total


def _bracket_root(f, x0, scale, max_expand=60):
    a, b = x0 - scale, x0 + scale
    fa, fb = f(a), f(b)
    for _ in range(max_expand):
        if fa > 0 >= fb:
            return a, b
        if fa <= 0:
            a -= scale
            fa = f(a)
        if fb > 0:
            b += scale
            fb = f(b)
        scale *= 2.0
    raise NumericalError(f"could not bracket the price near {x0:.6g}")


def solve_price(params: ModelParams, order: MetaorderSpec, t_grid, *, n_gauss: int = 16,
                form: str = "exact", rtol: float = 1e-6, max_iter: int = 200) -> PriceHistory:
    """March the price root forward on ``t_grid`` (``T`` is inserted if missing).

    With infinite memory the self-consistent form
    ``x_t = (m / L) int_0^{min(t,T)} G_0(x_t - x_tau, t - tau) dtau`` is iterated
    to ``rtol``; if the iteration stops contracting the step falls back to a
    bracketed root search of the same equation. With finite memory every step
    is a bracketed root search.
    """
    t_grid = np.asarray(t_grid, float)
    if t_grid[0] != 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and be strictly increasing")
    if order.T < t_grid[-1] and not np.any(np.isclose(t_grid, order.T, rtol=0, atol=1e-14)):
        t_grid = np.unique(np.append(t_grid, order.T))
    times = t_grid
    prices = np.zeros_like(times)
    fallbacks = 0
    iters = 0
    length = params.sigma1 * math.sqrt(times[1])
    for n in range(1, times.size):
        q = _StepQuadrature(params, order, times, prices, n, n_gauss, form)
        x0 = prices[n - 1]
        if params.nu == 0:
            x, k, ok = _fixed_point(q, x0, rtol, max_iter)
            iters += k
            if not ok:
                fallbacks += 1
                x = _root(q, x0, length)
        else:
            x = _root(q, x0, length)
        prices[n] = x
        length = max(params.sigma1 * math.sqrt(times[n] - times[n - 1]), 1e-3 * abs(x), 1e-12)
    return PriceHistory(times, prices, diagnostics={"n_gauss": n_gauss, "form": form,
                                                     "fixed_point_iterations": iters,
                                                     "root_fallbacks": fallbacks,
                                                     "steps": int(times.size - 1)})


def _fixed_point(q, x0, rtol, max_iter):
    L = q.params.L
    x = x0
    prev_step = math.inf
    for k in range(1, max_iter + 1):
        new = q.metaorder(x) / L
        step = abs(new - x)
        x = new
        if step <= rtol * max(abs(x), 1e-300):
            return x, k, True
        if step > prev_step and k > 3:
            return x, k, False
        prev_step = step
    return x, max_iter, False


def _root(q, x0, scale):
    a, b = _bracket_root(q.residual, x0, scale)
    return optimize.brentq(q.residual, a, b, xtol=1e-13, rtol=1e-12, maxiter=200)


def solve_trajectory(params: ModelParams, order: MetaorderSpec, t_end: float, *,
                     n_exec: int = 200, growth: float = 1.03, dt_max: Optional[float] = None,
                     **kwargs) -> ImpactTrajectory:
    """Convenience wrapper: default time grid, result as an :class:`ImpactTrajectory`."""
    grid = time_grid(order.T, t_end, n_exec=n_exec, growth=growth, dt_max=dt_max)
    hist = solve_price(params, order, grid, **kwargs)
    return hist.to_trajectory(params, order, t_end,
                              extra={"time_grid": {"n_exec": n_exec, "growth": growth,
                                                   "dt_max": dt_max, "points": int(grid.size)}})

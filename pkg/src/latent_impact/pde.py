"""Finite-difference integration of the signed latent order book.

The book is described by the signed density ``phi = phi_buy - phi_sell``.
In the fast-matching limit ``phi`` obeys a linear reaction-diffusion
equation

    d_t phi = sigma1**2 d_xx phi - nu phi + lam sign(x_t - x) + m delta(x - x_t)

and the price ``x_t`` is the zero crossing of ``phi``. The metaorder source
``m`` is on while the order is being executed.

Space is discretised with centred second differences on a uniform grid,
time with Crank-Nicolson (default), explicit Euler, or backward Euler.
Edge values are clamped to the initial book.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import special
from scipy.linalg import solve_banded

from .closed_form import stationary_book
from .core import MetaorderSpec, ModelParams

SCHEMES = ("cn", "explicit", "implicit")
RANNACHER_STEPS = 4


class NumericalError(RuntimeError):
    """A simulation could not continue; ``state`` holds the last good book."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ZeroCrossingLost(NumericalError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform price grid and base time step.

    ``n_cells`` counts intervals, so there are ``n_cells + 1`` nodes. When no
    metaorder is active the time step may grow geometrically by
    ``dt_growth`` up to ``dt_max`` (never for the explicit scheme).
    """

    x_min: float
    x_max: float
    n_cells: int
    dt: float
    scheme: str = "cn"
    dt_growth: float = 1.0
    dt_max: Optional[float] = None

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.n_cells < 64:
            raise ValueError(f"n_cells must be >= 64, got {self.n_cells}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.dt_growth < 1:
            raise ValueError("dt_growth must be >= 1")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_cells + 1)

    def check_stability(self, params: ModelParams, dt=None):
        dt = self.dt if dt is None else dt
        if self.scheme == "explicit":
            r = params.sigma1**2 * dt / self.dx**2
            if r > 0.5:
                raise ValueError(f"explicit scheme unstable: sigma1^2 dt / dx^2 = {r:.3g} > 1/2")

    def refined(self, factor: int = 2) -> "GridSpec":
        """Same domain with ``dx`` divided by ``factor`` and ``dt`` by ``factor**2``.

        The price error of a moving source scales like ``sqrt(dt)``, so the
        execution step shrinks with ``dx**2`` for every scheme. The
        post-execution cap only needs ``dt_max / factor``.
        """
        return replace(self, n_cells=self.n_cells * factor, dt=self.dt / factor**2,
                       dt_max=None if self.dt_max is None else self.dt_max / factor)

    def as_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_cells": self.n_cells,
                "dx": self.dx, "dt": self.dt, "scheme": self.scheme,
                "dt_growth": self.dt_growth, "dt_max": self.dt_max}


@dataclass(frozen=True)
class BookState:
    """Signed density on the grid, current price and clock.

    ``velocity`` is the price speed over the last step; it is only used to
    centre the next metaorder deposit.
    """

    phi: np.ndarray
    x_t: float
    t: float = 0.0
    velocity: float = 0.0


@dataclass
class ImpactTrajectory:
    """Price path ``x_t - x_0`` of one simulated (or solved) execution."""

    times: np.ndarray
    impact: np.ndarray
    T: float
    peak: float
    plateau: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.impact = np.asarray(self.impact, float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def prices(self) -> np.ndarray:
        return self.impact + self.metadata.get("x0", 0.0)

    def at(self, t):
        return np.interp(t, self.times, self.impact)

    def window(self, t_lo, t_hi):
        m = (self.times >= t_lo) & (self.times <= t_hi)
        return self.times[m], self.impact[m]


def linear_book(params: ModelParams, x):
    return -params.L * np.asarray(x, float)


def initial_book(params: ModelParams, x):
    """Stationary book for finite memory, linear book for ``nu == 0``."""
    if params.nu == 0:
        return linear_book(params, x)
    return stationary_book(params, x)


def find_price(phi, x, near):
    """Interpolated buy/sell boundary of ``phi`` closest to ``near``.

    Returns ``(price, n_crossings)``; the price is ``None`` if ``phi`` never
    crosses from positive to non-positive.
    """
    pos = phi[:-1] > 0
    k = np.nonzero(pos & (phi[1:] <= 0))[0]
    if k.size == 0:
        return None, 0
    a, b = phi[k], phi[k + 1]
    cand = np.where(b == 0, x[k + 1], x[k] + (x[k + 1] - x[k]) * a / (a - b))
    i = int(np.argmin(np.abs(cand - near)))
    return float(cand[i]), int(k.size)


def _kernel_time_integral_cdf(y, sigma, h):
    """``int_0^h (1/2) erf(y / (2 sigma sqrt(s))) ds``, the antiderivative in ``y``
    of the time-integrated heat kernel ``int_0^h G(y, s) ds``."""
    a = np.asarray(y, float) / (2.0 * sigma)
    r = a / math.sqrt(h)
    out = h * special.erf(r) + 2.0 * a * math.sqrt(h / math.pi) * np.exp(-r * r) \
        - 2.0 * a * np.abs(a) * special.erfc(np.abs(r))
    return 0.5 * out


class BookIntegrator:
    """Time stepper for one grid and one parameter set.

    Keeps banded matrices per time step so repeated steps with the same
    ``dt`` only cost a tridiagonal solve.
    """

    def __init__(self, params: ModelParams, grid: GridSpec, scheme: Optional[str] = None):
        self.params = params
        self.grid = grid
        self.scheme = scheme or grid.scheme
        self.x = grid.x
        self.dx = grid.dx
        self._diff = params.sigma1**2 / self.dx**2
        self._bands = {}
        self.max_crossings = 1
        # backward Euler steps still owed after the last deposit (Crank-Nicolson only)
        self._damping_left = 0

    def _lhs(self, dt, scheme=None):
        scheme = scheme or self.scheme
        key = (scheme, dt)
        if key not in self._bands:
            n = self.x.size
            theta = 0.5 if scheme == "cn" else 1.0
            a = theta * dt * self._diff
            ab = np.empty((3, n))
            ab[0, :] = -a
            ab[1, :] = 1.0 + 2.0 * a + theta * dt * self.params.nu
            ab[2, :] = -a
            # Dirichlet rows
            ab[1, 0] = ab[1, -1] = 1.0
            ab[0, 1] = 0.0
            ab[2, -2] = 0.0
            if len(self._bands) > 64:
                self._bands.clear()
            self._bands[key] = ab
        return self._bands[key]

    def operator(self, phi):
        """``sigma1^2 phi'' - nu phi`` at interior nodes (zero at the edges)."""
        out = np.zeros_like(phi)
        out[1:-1] = self._diff * (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) - self.params.nu * phi[1:-1]
        return out

    def renewal(self, x_t, dt):
        """Fresh latent orders ``lam * sign(x_t - x)`` deposited over ``dt``."""
        if not self.params.lam:
            return np.zeros_like(self.x)
        # cell average of sign(x_t - x) over [x_i - dx/2, x_i + dx/2]
        s = dt * self.params.lam * np.clip((x_t - self.x) / (0.5 * self.dx), -1.0, 1.0)
        s[0] = s[-1] = 0.0
        return s

    def deposit(self, x_t, dt):
        """Density profile, per unit volume, of a point source at ``x_t`` run for ``dt``.

        This is the cell average of ``int_0^dt G(x - x_t, s) ds`` with ``G``
        the heat kernel, computed from its closed-form antiderivative, so the
        deposited volume is exact and the profile is already spread over the
        diffusion length of the step. Cancellations during the step only
        rescale the mass.
        """
        x = self.x
        # the profile is below 1e-15 beyond 12 diffusion lengths of the step
        reach = 12.0 * self.params.sigma1 * math.sqrt(dt) + 2.0 * self.dx
        lo = max(int(np.searchsorted(x, x_t - reach)) - 1, 0)
        hi = min(int(np.searchsorted(x, x_t + reach)) + 1, x.size)
        inner = x[lo:hi]
        edges = np.concatenate(([x[0]] if lo == 0 else [0.5 * (x[lo - 1] + x[lo])],
                                0.5 * (inner[1:] + inner[:-1]),
                                [x[-1]] if hi == x.size else [0.5 * (x[hi - 1] + x[hi])]))
        cum = _kernel_time_integral_cdf(edges - x_t, self.params.sigma1, dt)
        out = np.zeros_like(x)
        out[lo:hi] = np.diff(cum) / (np.diff(edges) * dt)
        nu = self.params.nu
        if nu:
            out *= -math.expm1(-nu * dt) / (nu * dt)
        out[0] = out[-1] = 0.0
        return out

    def step(self, state: BookState, rate: float, dt: float, pin_price: bool = False) -> BookState:
        phi = state.phi
        src = self.renewal(state.x_t, dt)
        scheme = self.scheme
        if scheme == "cn":
            # Crank-Nicolson barely damps the cell-scale spike each deposit leaves behind, so
            # deposit steps and the few after them use backward Euler (Rannacher smoothing)
            if rate:
                scheme = "implicit"
                self._damping_left = RANNACHER_STEPS
            elif self._damping_left > 0:
                scheme = "implicit"
                self._damping_left -= 1
        if scheme == "explicit":
            self.grid.check_stability(self.params, dt)
            new = phi + dt * self.operator(phi) + src
        else:
            rhs = phi + src
            if scheme == "cn":
                rhs = rhs + 0.5 * dt * self.operator(phi)
            rhs[0], rhs[-1] = phi[0], phi[-1]
            new = solve_banded((1, 1), self._lhs(dt, scheme), rhs, check_finite=False)
        if rate:
            # centre on the expected mid-step price; a start-of-step centre costs O(sqrt(dt))
            centre = state.x_t + 0.5 * state.velocity * dt
            if not self.grid.x_min < centre < self.grid.x_max:
                raise ZeroCrossingLost(f"price {centre:.6g} left the grid", state)
            new += rate * dt * self.deposit(centre, dt)
        new[0], new[-1] = phi[0], phi[-1]
        if pin_price:
            x_new = state.x_t
        else:
            x_new, count = find_price(new, self.x, state.x_t)
            if x_new is None:
                raise ZeroCrossingLost(
                    f"no buy/sell boundary at t={state.t + dt:.6g}; metaorder too violent for the grid",
                    state)
            self.max_crossings = max(self.max_crossings, count)
        return BookState(phi=new, x_t=x_new, t=state.t + dt, velocity=(x_new - state.x_t) / dt)


def step(state: BookState, params: ModelParams, grid: GridSpec, rate: float = 0.0,
         dt: Optional[float] = None, pin_price: bool = False) -> BookState:
    """Advance ``state`` by one time step with metaorder rate ``rate``."""
    return BookIntegrator(params, grid).step(state, rate, grid.dt if dt is None else dt, pin_price)


def stationary_state(params: ModelParams, grid: GridSpec) -> BookState:
    """Initial book on ``grid`` (analytic stationary or linear) with the price at 0."""
    return BookState(phi=initial_book(params, grid.x), x_t=0.0, t=0.0)


def relax_to_stationary(params: ModelParams, grid: GridSpec, tol: float = 1e-6,
                        max_memory_times: float = 50.0, steps_per_tm: int = 20) -> BookState:
    """Evolve an empty book (edges held at the stationary values) until it stops changing.

    Uses backward Euler with ``steps_per_tm`` steps per memory time; the
    steady state of the scheme is the steady state of the spatial
    discretisation, whatever the step. Convergence is declared when the
    sup-norm change over one memory time drops below ``tol * lam / nu``.
    """
    params.require_finite_memory()
    integ = BookIntegrator(params, grid, scheme="implicit")
    phi = np.zeros_like(integ.x)
    phi[0], phi[-1] = stationary_book(params, [grid.x_min, grid.x_max])
    state = BookState(phi=phi, x_t=0.0, t=0.0)
    dt = params.tm / steps_per_tm
    scale = params.far_density
    for _ in range(int(max_memory_times)):
        before = state.phi
        for _ in range(steps_per_tm):
            state = integ.step(state, 0.0, dt, pin_price=True)
        change = np.max(np.abs(state.phi - before))
        if change < tol * scale:
            x_t, _ = find_price(state.phi, integ.x, 0.0)
            return BookState(phi=state.phi, x_t=0.0 if x_t is None else x_t, t=state.t)
    raise NumericalError(
        f"book did not relax within {max_memory_times} memory times (last change {change:.3g})", state)


def default_grid(params: ModelParams, T: float, t_end: float, Q: float = 0.0, *,
                 dx: Optional[float] = None, dt: Optional[float] = None, scheme: str = "cn",
                 dt_growth: Optional[float] = None, dt_max: Optional[float] = None,
                 resolution: int = 40) -> GridSpec:
    """Grid wide enough that the edges stay causally irrelevant.

    The half width is ``8 * max(1/p, sigma1 * sqrt(t_end))`` beyond the
    largest expected excursion of the price. Default ``dx`` puts
    ``resolution`` nodes across the smaller of the diffusion length over
    ``T`` and the expected peak impact; for fast orders the layer
    ``sigma1**2 * T / peak`` in front of the price gets ``resolution / 4``.
    """
    s = params.sigma1
    L = params.L
    Q = abs(Q)
    # linear (slow) and square-root (fast) estimates of the peak; the truth is below both
    peak = min(Q / (L * s * math.sqrt(math.pi * T)), math.sqrt(2.0 * Q / L)) if Q else 0.0
    reach = s * math.sqrt(t_end)
    if params.nu > 0:
        reach = max(reach, params.book_length)
    half = 8.0 * reach + 2.0 * peak
    if dx is None:
        scale = s * math.sqrt(T)
        if peak > 0:
            scale = min(scale, max(peak, 0.05 * scale))
        dx = scale / resolution
        if peak > s * math.sqrt(T):
            # fast execution: resolve the diffusive layer sigma^2 T / peak ahead of the moving price
            dx = min(dx, s**2 * T / peak / (resolution / 4.0))
    n = 2 * int(math.ceil(half / dx))
    n = max(n, 64)
    half = n * dx / 2.0
    if dt is None:
        if scheme == "explicit":
            dt = 0.4 * dx**2 / s**2
        else:
            # sigma^2 dt / dx^2 <= 1 while orders are deposited, at most 2000 steps over T
            dt = min(T / 400.0, max(dx**2 / s**2, T / 2000.0))
            if peak > 0:
                # the price should not cross more than one cell per step
                dt = min(dt, dx * T / peak)
    if dt_growth is None:
        dt_growth = 1.0 if scheme == "explicit" else 1.02
    if dt_max is None and scheme != "explicit":
        dt_max = max(dt, (params.tm if params.nu > 0 else t_end) / 50.0, T / 10.0)
    return GridSpec(x_min=-half, x_max=half, n_cells=n, dt=dt, scheme=scheme,
                    dt_growth=dt_growth, dt_max=dt_max)


def _schedule_for(order: MetaorderSpec):
    return [(0.0, order.T, order.rate)]


def simulate_schedule(params: ModelParams, grid: GridSpec, schedule: Sequence[tuple], t_end: float,
                      state: Optional[BookState] = None, record_every: int = 1):
    """Integrate under a piecewise-constant trading schedule.

    ``schedule`` is a list of ``(t_start, t_stop, rate)`` intervals. Returns
    ``(times, prices, final_state, integrator)``. Steps never straddle a
    schedule boundary, and the step only grows while no order is active.
    """
    integ = BookIntegrator(params, grid)
    if state is None:
        state = stationary_state(params, grid)
    grid.check_stability(params)
    breaks = sorted({t for a, b, _ in schedule for t in (a, b) if 0 < t < t_end} | {t_end})
    last_active = max((b for _, b, r in schedule if r), default=0.0)

    def rate_at(t):
        return sum(r for a, b, r in schedule if a <= t < b)

    times = [state.t]
    prices = [state.x_t]
    dt = grid.dt
    k = 0
    eps = 1e-12 * max(1.0, t_end)
    for nxt in breaks:
        while state.t < nxt - eps:
            h = min(dt, nxt - state.t)
            r = rate_at(state.t + 0.5 * h)
            state = integ.step(state, r, h)
            k += 1
            if state.t >= nxt - eps:
                state = replace(state, t=nxt)
            if k % record_every == 0 or state.t >= nxt - eps:
                times.append(state.t)
                prices.append(state.x_t)
            if state.t >= last_active - eps and grid.scheme != "explicit":
                dt = min(dt * grid.dt_growth, grid.dt_max or dt)
    return np.array(times), np.array(prices), state, integ


def plateau_level(times, values, t_end=None, fraction=0.1):
    """Time average of ``values`` over the last ``fraction`` of ``[0, t_end]``."""
    times = np.asarray(times)
    values = np.asarray(values)
    t_end = times[-1] if t_end is None else t_end
    lo = (1.0 - fraction) * t_end
    m = times >= lo
    t, v = times[m], values[m]
    if t.size < 2:
        return float(np.interp(t_end, times, values))
    return float(np.trapezoid(v, t) / (t[-1] - t[0]))


def run_metaorder(params: ModelParams, grid: GridSpec, order: MetaorderSpec, t_end: float,
                  state: Optional[BookState] = None) -> ImpactTrajectory:
    """Simulate one metaorder from a stationary (or linear) book.

    The peak is the impact at ``t = T``; the plateau is the time average
    over the last 10% of ``[0, t_end]``.

    With finite memory the plateau settles at ``sigma1 * sqrt(nu) * Q / v1``
    (equivalently ``nu * Q / lam``) for ``T`` well below the memory time,
    which is twice :func:`closed_form.permanent_impact`.
    """
    if not t_end > order.T:
        raise ValueError("t_end must exceed the execution horizon T")
    times, prices, final, integ = simulate_schedule(params, grid, _schedule_for(order), t_end, state)
    x0 = prices[0]
    impact = prices - x0
    peak = float(np.interp(order.T, times, impact))
    meta = {
        "engine": "pde",
        "params": params.as_dict(),
        "metaorder": {"Q": order.Q, "T": order.T, "rate": order.rate},
        "grid": grid.as_dict(),
        "t_end": t_end,
        "x0": float(x0),
        "diagnostics": {"steps": int(len(times) - 1), "max_crossings": integ.max_crossings},
    }
    return ImpactTrajectory(times=times, impact=impact, T=order.T, peak=peak,
                            plateau=plateau_level(times, impact, t_end), metadata=meta)


def round_trip_cost(params: ModelParams, grid: GridSpec, Q: float, T: float) -> float:
    """Net cash spent buying ``Q`` over ``T`` and selling it back over the next ``T``.

    Execution happens at the running price, so the cost is
    ``int rate(t) x_t dt`` over ``[0, 2T]``.
    """
    if Q == 0:
        return 0.0
    m = Q / T
    schedule = [(0.0, T, m), (T, 2.0 * T, -m)]
    times, prices, _, _ = simulate_schedule(params, grid, schedule, 2.0 * T)
    x = prices - prices[0]
    first = times <= T
    second = times >= T
    paid = np.trapezoid(m * x[first], times[first])
    received = np.trapezoid(m * x[second], times[second])
    return float(paid - received)

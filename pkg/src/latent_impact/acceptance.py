"""Acceptance suite shared by the test-suite and ``latent-impact verify``.

Each criterion returns a list of named checks; a criterion passes when all
of its checks pass. Thresholds come from the packaged ``acceptance.ini``.
``coarsen`` multiplies every default PDE cell size (and the step by its
square) and exists to demonstrate that the convergence checks can fail.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import closed_form as cf
from . import green, mrr, pde, perturbation
from .analytics import multipliers, summarize_and_fit, synthetic_universe
from .config import load_thresholds
from .core import MetaorderSpec, ModelParams, StockRecord
from .scaling import loglog_fit

# reference books: unit volatility and liquidity, and a finite-memory book with tm = 100
INFINITE = ModelParams.infinite_memory(1.0, 1.0)
FINITE = ModelParams(1.0, 0.01, 0.1)
CROSS_Q = (0.5, 2.0, 8.0)
CROSS_T = (0.5, 1.0, 2.0)
FINITE_Q, FINITE_T, FINITE_T_END = 1.0, 1.0, 1000.0


@dataclass
class Check:
    label: str
    value: float
    threshold: float
    passed: bool

    def line(self) -> str:
        return f"{self.label}: {self.value:.6g} (limit {self.threshold:.6g}) {'ok' if self.passed else 'FAIL'}"


@dataclass
class CriterionResult:
    number: int
    name: str
    groups: tuple
    passed: bool
    checks: list
    runtime: float
    details: dict = field(default_factory=dict)
    error: str = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [c.label for c in self.checks if not c.passed]
        extra = f" [failed: {', '.join(failed)}]" if failed else ""
        if self.error:
            extra = f" [error: {self.error}]"
        return f"{status}  criterion {self.number:2d} {self.name} ({self.runtime:.1f}s){extra}"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["groups"] = list(self.groups)
        return d


class Context:
    """Thresholds, the coarsening factor and a cache for runs shared between criteria."""

    def __init__(self, thresholds=None, coarsen: int = 1):
        self.thr = thresholds if thresholds is not None else load_thresholds()
        if coarsen < 1 or int(coarsen) != coarsen:
            raise ValueError(f"coarsen must be a positive integer, got {coarsen}")
        self.coarsen = int(coarsen)
        self._cache = {}

    def f(self, section, key) -> float:
        return self.thr.getfloat(section, key)

    def grid(self, params, T, t_end, Q, **kw) -> pde.GridSpec:
        g = pde.default_grid(params, T, t_end, Q, **kw)
        c = self.coarsen
        if c == 1:
            return g
        n = max(64, 2 * (g.n_cells // (2 * c)))
        return replace(g, n_cells=n, dt=g.dt * c**2, dt_max=None if g.dt_max is None else g.dt_max * c)

    def cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def pde_run(self, params, Q, T, t_end):
        key = ("pde", params, Q, T, t_end)
        return self.cached(key, lambda: pde.run_metaorder(
            params, self.grid(params, T, t_end, Q), MetaorderSpec(Q, T), t_end))

    def green_run(self, params, Q, T, t_end):
        key = ("green", params, Q, T, t_end)
        return self.cached(key, lambda: green.solve_trajectory(params, MetaorderSpec(Q, T), t_end))


def _rel(a, b):
    return abs(a / b - 1.0)


def _le(label, value, limit):
    return Check(label, float(value), float(limit), bool(value <= limit))


# --- criteria ---------------------------------------------------------------

def sqrt_law(ctx: Context):
    t0 = time.perf_counter()
    T = 1.0
    v_T = INFINITE.v1 * T
    Qs = v_T * np.logspace(math.log10(5e-4), math.log10(ctx.f("sqrt_law", "max_participation")), 7)
    peaks = [ctx.pde_run(INFINITE, float(q), T, 2 * T).peak for q in Qs]
    fit = loglog_fit(Qs, peaks)
    tol = ctx.f("sqrt_law", "tolerance")
    checks = [
        Check("points", Qs.size, ctx.f("sqrt_law", "min_points"), Qs.size >= ctx.f("sqrt_law", "min_points")),
        Check("decades", fit.decades, ctx.f("sqrt_law", "min_decades"),
              fit.decades >= ctx.f("sqrt_law", "min_decades") - 1e-9),
        _le("max participation", Qs.max() / v_T, ctx.f("sqrt_law", "max_participation") * (1 + 1e-12)),
        _le("|slope - 0.5|", abs(fit.slope - ctx.f("sqrt_law", "target")), tol),
        _le("runtime [s]", time.perf_counter() - t0, ctx.f("sqrt_law", "max_runtime")),
    ]
    return checks, {"Q": Qs.tolist(), "peaks": peaks, "fit": fit.as_dict()}


def decay(ctx: Context):
    Q, T = 0.1, 1.0
    lo, hi = ctx.f("decay", "t_lo"), ctx.f("decay", "t_hi")
    # the window sets the domain; the spacing only has to resolve sigma * sqrt(T)
    g = ctx.grid(INFINITE, T, hi, Q, dx=0.02 * INFINITE.sigma1 * math.sqrt(T))
    traj = pde.run_metaorder(INFINITE, g, MetaorderSpec(Q, T), hi)
    t, x = traj.window(lo, hi)
    ref = cf.asymptotic_decay(INFINITE, Q, t)
    fit = loglog_fit(t, x)
    worst = float(np.max(np.abs(x / ref - 1.0)))
    checks = [
        _le("|slope + 0.5|", abs(fit.slope - ctx.f("decay", "target")), ctx.f("decay", "tolerance")),
        _le("max pointwise deviation", worst, ctx.f("decay", "pointwise")),
    ]
    return checks, {"window": [lo, hi], "fit": fit.as_dict(), "points": int(t.size)}


def permanent(ctx: Context):
    t0 = time.perf_counter()
    p = FINITE
    Q, T = FINITE_Q, FINITE_T
    eq2 = cf.permanent_impact(p.sigma1, p.v1, p.tm, Q)
    a = ctx.pde_run(p, Q, T, FINITE_T_END).plateau
    b = ctx.pde_run(p, Q, 4 * T, FINITE_T_END).plateau
    tol = ctx.f("permanent", "match")
    checks = [
        _le("Q / (v1 tm)", Q / (p.v1 * p.tm), ctx.f("permanent", "max_participation") * (1 + 1e-12)),
        _le("plateau(T) vs closed form", _rel(a, eq2), tol),
        _le("plateau(4T) vs closed form", _rel(b, eq2), tol),
        _le("plateau(T) vs plateau(4T)", _rel(a, b), ctx.f("permanent", "horizon_agreement")),
        _le("runtime [s]", time.perf_counter() - t0, ctx.f("permanent", "max_runtime")),
    ]
    return checks, {"closed_form": eq2, "plateau_T": a, "plateau_4T": b,
                    "sigma_sqrt_nu_Q_over_v1": p.sigma1 * math.sqrt(p.nu) * Q / p.v1}


def stationary(ctx: Context):
    p = FINITE
    g = ctx.grid(p, FINITE_T, FINITE_T_END, 0.0)
    st = pde.relax_to_stationary(p, g)
    ref = cf.stationary_book(p, g.x)
    sup = float(np.max(np.abs(st.phi - ref))) / p.far_density
    i = int(np.argmin(np.abs(g.x)))
    slope = (st.phi[i + 1] - st.phi[i - 1]) / (g.x[i + 1] - g.x[i - 1])
    checks = [
        _le("sup-norm / (lam/nu)", sup, ctx.f("stationary", "sup_norm")),
        _le("slope at origin vs -L", _rel(slope, -p.L), ctx.f("stationary", "slope")),
    ]
    return checks, {"slope": slope, "relax_time": st.t}


def cross_solver(ctx: Context):
    checks = []
    rows = []
    cases = [(INFINITE, q, T, 2 * T) for q in CROSS_Q for T in CROSS_T]
    cases.append((FINITE, FINITE_Q, FINITE_T, FINITE_T_END))
    for params, Q, T, t_end in cases:
        a = ctx.pde_run(params, Q, T, t_end)
        b = ctx.green_run(params, Q, T, t_end)
        tag = f"nu={params.nu:g} Q={Q:g} T={T:g}"
        checks.append(_le(f"peak {tag}", _rel(a.peak, b.peak), ctx.f("cross_solver", "peak")))
        checks.append(_le(f"plateau {tag}", _rel(a.plateau, b.plateau), ctx.f("cross_solver", "plateau")))
        rows.append({"nu": params.nu, "Q": Q, "T": T, "pde_peak": a.peak, "green_peak": b.peak,
                     "pde_plateau": a.plateau, "green_plateau": b.plateau})
    return checks, {"cases": rows}


def perturbation_checks(ctx: Context):
    base = perturbation.solve_F(perturbation.PerturbationParams(beta=1.0))
    m = base.u >= ctx.f("perturbation", "u_min")
    shape = float(np.max(np.abs(base.F[m] / base.closed_form()[m] - 1.0)))
    res = float(np.max(np.abs(perturbation.residual(base))))
    levels = {b: perturbation.solve_F(perturbation.PerturbationParams(beta=b)).f_inf for b in (0.5, 1.0, 2.0)}
    spread = max(levels.values()) / min(levels.values()) - 1.0
    checks = [
        _le("closed-form shape, u >= 3", shape, ctx.f("perturbation", "closed_form")),
        _le("F_inf vs 1/2", _rel(base.f_inf, base.f_inf_analytic), ctx.f("perturbation", "f_inf")),
        _le("beta spread of F_inf", spread, ctx.f("perturbation", "beta_agreement")),
        _le("residual / F_inf", res / base.f_inf, ctx.f("perturbation", "residual")),
    ]
    return checks, {"f_inf": base.f_inf, "levels": {str(k): v for k, v in levels.items()},
                    "F0": base.diagnostics["F0"]}


def triangle(ctx: Context):
    p = FINITE
    Q = FINITE_Q
    pert = math.sqrt(p.nu) * perturbation.f_infinity(p.sigma1, p.v1, Q)
    closed = cf.permanent_impact(p.sigma1, p.v1, p.tm, Q)
    plateau = ctx.pde_run(p, Q, FINITE_T, FINITE_T_END).plateau
    tol = ctx.f("triangle", "pde_match")
    checks = [
        _le("sqrt(nu) F_inf vs closed form", _rel(pert, closed), ctx.f("triangle", "identity_rtol")),
        _le("closed form vs PDE plateau", _rel(closed, plateau), tol),
        _le("sqrt(nu) F_inf vs PDE plateau", _rel(pert, plateau), tol),
    ]
    numeric = perturbation.solve_F().f_inf * math.sqrt(p.nu) * p.sigma1 * Q / p.v1
    return checks, {"perturbation": pert, "closed_form": closed, "pde_plateau": plateau,
                    "numeric_F_inf_beta1": numeric}


def round_trip(ctx: Context):
    checks = []
    costs = []
    cases = [(INFINITE, q, T) for q in CROSS_Q for T in CROSS_T] + [(FINITE, FINITE_Q, FINITE_T)]
    for params, Q, T in cases:
        c = pde.round_trip_cost(params, ctx.grid(params, T, 2 * T, Q), Q, T)
        costs.append(c)
        checks.append(Check(f"cost nu={params.nu:g} Q={Q:g} T={T:g}", c, 0.0, c > 0))
    return checks, {"costs": costs}


def worked_numbers(ctx: Context):
    atol = ctx.f("worked_numbers", "multiplier_atol")
    transient = cf.square_root_impact(cf.ImpactInputs(Y=0.5, sigma_T=0.025, Q=0.01, V_T=1.0))
    stock = StockRecord("REF", 0.025, 1.0, 200.0)
    m_tm = cf.gk_multiplier_tm(stock, 20.0)
    m_delta = cf.gk_multiplier_delta(stock, 0.10)
    # tm = delta^2 / sigma1^2 = 16 must give the same multiplier in both modes
    same = _rel(cf.gk_multiplier_tm(stock, (0.10 / 0.025) ** 2), m_delta)
    fits = [summarize_and_fit(multipliers(synthetic_universe(950, seed=1), delta=0.10)) for _ in range(2)]
    checks = [
        _le("transient example", abs(transient - 1.25e-3), ctx.f("worked_numbers", "transient_atol")),
        Check("mandate multiplier(0.8)", cf.mandate_multiplier(0.8), 5.0, cf.mandate_multiplier(0.8) == 5.0),
        _le("tm=20 multiplier vs 0.559", abs(m_tm - 0.559), atol),
        _le("delta=0.10 multiplier vs 0.625", abs(m_delta - 0.625), atol),
        _le("tm and delta modes agree", same, 1e-12),
        Check("synthetic pipeline deterministic", float(fits[0] == fits[1]), 1.0, fits[0] == fits[1]),
    ]
    return checks, {"transient": transient, "M_tm20": m_tm, "M_delta": m_delta,
                    "prose_ratio": m_tm / (5.0 / math.sqrt(20.0))}


def mrr_closure(ctx: Context):
    t0 = time.perf_counter()
    n = ctx.thr.getint("mrr", "n_trades")
    zmax = ctx.f("mrr", "z_max")
    checks = []
    rows = []
    for c1 in (0.0, 0.3, 0.6, 0.9):
        for ratio in (0.0, 0.2):
            r = mrr.simulate(mrr.MrrConfig(s=1.0, c1=c1, v0=ratio, n_trades=n, seed=12345))
            checks.append(_le(f"closure |z| c1={c1} v0/s={ratio}", abs(r.closure_z()), zmax))
            checks.append(_le(f"return acf |z| c1={c1} v0/s={ratio}", abs(r.autocorr_z()), zmax))
            rows.append(r.as_dict())
    checks.append(_le("runtime [s]", time.perf_counter() - t0, ctx.f("mrr", "max_runtime")))
    return checks, {"runs": rows}


def hygiene(ctx: Context):
    checks = []
    details = {}
    for Q, T in ((2.0, 1.0), (8.0, 0.5)):
        g = ctx.grid(INFINITE, T, 2 * T, Q)
        order = MetaorderSpec(Q, T)
        a = pde.run_metaorder(INFINITE, g, order, 2 * T).peak
        b = pde.run_metaorder(INFINITE, g.refined(), order, 2 * T).peak
        checks.append(_le(f"grid halving Q={Q:g} T={T:g}", _rel(b, a), ctx.f("hygiene", "grid_halving")))
        tg = green.time_grid(T, 2 * T)
        ra = green.solve_price(INFINITE, order, tg)
        rb = green.solve_price(INFINITE, order, green.refine_time_grid(tg))
        pa, pb = float(ra(T)), float(rb(T))
        checks.append(_le(f"time doubling Q={Q:g} T={T:g}", _rel(pb, pa), ctx.f("hygiene", "time_doubling")))
        details[f"Q={Q:g},T={T:g}"] = {"pde": [a, b], "green": [pa, pb]}
    worst = 0.0
    for nu in (0.0, 0.01, 0.5):
        params = ModelParams.infinite_memory(1.0, 1.0) if nu == 0 else ModelParams(1.0, nu, math.sqrt(nu))
        for t in (0.01, 1.0, 10.0):
            worst = max(worst, abs(green.kernel_mass(t, params) - math.exp(-nu * t)))
    checks.append(_le("kernel mass error", worst, ctx.f("hygiene", "kernel_mass")))
    return checks, details


@dataclass(frozen=True)
class Criterion:
    number: int
    name: str
    groups: tuple
    fn: Callable


CRITERIA = (
    Criterion(1, "square-root law", ("pde", "sweep"), sqrt_law),
    Criterion(2, "impact decay", ("pde", "sweep"), decay),
    Criterion(3, "permanent impact", ("pde", "closed_form"), permanent),
    Criterion(4, "stationary book", ("pde",), stationary),
    Criterion(5, "cross-solver oracle", ("pde", "green"), cross_solver),
    Criterion(6, "perturbation solution", ("perturbation",), perturbation_checks),
    Criterion(7, "consistency triangle", ("triangle", "closed_form", "pde"), triangle),
    Criterion(8, "round-trip cost", ("pde",), round_trip),
    Criterion(9, "worked numbers", ("closed_form", "analytics"), worked_numbers),
    Criterion(10, "MRR closure", ("mrr",), mrr_closure),
    Criterion(11, "numerical hygiene", ("pde", "green", "hygiene"), hygiene),
)


def select(filter_text=None):
    """Criteria whose number, name or group matches any comma-separated token."""
    if not filter_text:
        return list(CRITERIA)
    tokens = [t.strip().lower() for t in filter_text.split(",") if t.strip()]
    out = []
    for c in CRITERIA:
        keys = {str(c.number), c.name.lower(), *c.groups}
        if any(tok == str(c.number) or any(tok in k for k in keys if not k.isdigit()) for tok in tokens):
            out.append(c)
    return out


def run_criterion(criterion: Criterion, ctx: Context) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", cf.RegimeWarning)
            checks, details = criterion.fn(ctx)
        error = None
    except Exception as exc:  # reported per criterion, never swallowed silently
        checks, details, error = [], {}, f"{type(exc).__name__}: {exc}"
    passed = error is None and all(c.passed for c in checks)
    return CriterionResult(criterion.number, criterion.name, criterion.groups, passed, checks,
                           time.perf_counter() - t0, details, error)


def run(filter_text=None, coarsen=1, thresholds=None, echo=None):
    """Run the selected criteria; ``echo`` receives each summary line as it completes."""
    ctx = Context(thresholds, coarsen)
    results = []
    for c in select(filter_text):
        r = run_criterion(c, ctx)
        if echo is not None:
            echo(r.line())
        results.append(r)
    return results

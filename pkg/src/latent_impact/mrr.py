"""Monte Carlo check of the spread / sign-correlation / volatility relation.

Trade signs follow a two-state Markov chain that flips with probability
``(1 - c1) / 2``, so ``corr(eps_n, eps_n+1) = c1`` exactly. The mid price
moves only on the unpredictable part of each sign,

    r_n = (s / 2) * (eps_n - c1 * eps_n-1) + xi_n,    xi_n ~ N(0, v0**2)

Since ``E[eps_n | past] = c1 * eps_n-1`` the trade part is a martingale
difference, so returns are white, and its variance is
``(s/2)**2 * (1 - c1**2)``. Adding the news term gives

    upsilon**2 = (1 - c1**2) / 4 * s**2 + v0**2

Standard errors use batch means, which stay valid when the sign chain is
strongly persistent.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

N_BATCHES = 100


@dataclass(frozen=True)
class MrrConfig:
    """Inputs of one simulation.

    Parameters
    ----------
    s : float
        Bid-ask spread.
    c1 : float
        One-lag sign autocorrelation, ``|c1| < 1``.
    v0 : float
        News volatility per trade.
    n_trades : int
        Number of simulated trades.
    seed : int
        Seed of the random generator.
    """

    s: float = 1.0
    c1: float = 0.0
    v0: float = 0.0
    n_trades: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if not abs(self.c1) < 1:
            raise ValueError(f"|c1| must be < 1, got {self.c1}")
        if self.s < 0 or self.v0 < 0:
            raise ValueError("spread and news volatility must be non-negative")
        if int(self.n_trades) != self.n_trades or self.n_trades < 10 * N_BATCHES:
            raise ValueError(f"n_trades must be an integer >= {10 * N_BATCHES}, got {self.n_trades}")

    @property
    def upsilon(self) -> float:
        """Analytic per-trade volatility."""
        return analytic_upsilon(self.s, self.c1, self.v0)


@dataclass(frozen=True)
class MrrResult:
    config: MrrConfig
    measured_upsilon: float
    upsilon_stderr: float
    measured_c1: float
    c1_stderr: float
    return_autocorr: float
    autocorr_stderr: float
    closure: float
    closure_stderr: float

    def closure_z(self) -> float:
        """``closure / closure_stderr``; zero when both vanish."""
        if self.closure_stderr == 0:
            return 0.0 if self.closure == 0 else math.inf
        return self.closure / self.closure_stderr

    def autocorr_z(self) -> float:
        if self.autocorr_stderr == 0:
            return 0.0 if self.return_autocorr == 0 else math.inf
        return self.return_autocorr / self.autocorr_stderr

    def as_dict(self) -> dict:
        d = asdict(self)
        d["analytic_upsilon"] = self.config.upsilon
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.as_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def analytic_upsilon(s: float, c1: float, v0: float) -> float:
    return math.sqrt((1.0 - c1**2) / 4.0 * s**2 + v0**2)


def simulate_series(cfg: MrrConfig):
    """Signs ``eps_0..eps_n`` and the ``n`` returns they generate."""
    rng = np.random.default_rng(cfg.seed)
    n = int(cfg.n_trades)
    first = 1 if rng.random() < 0.5 else -1
    flips = rng.random(n) < 0.5 * (1.0 - cfg.c1)
    eps = first * np.where(np.cumsum(flips) % 2 == 0, 1, -1)
    eps = np.concatenate(([first], eps)).astype(float)
    news = rng.normal(0.0, cfg.v0, n) if cfg.v0 > 0 else np.zeros(n)
    returns = 0.5 * cfg.s * (eps[1:] - cfg.c1 * eps[:-1]) + news
    return eps, returns


def _batch_stat(values, n_batches=N_BATCHES):
    """Mean of ``values`` and its batch-means standard error."""
    m = len(values) // n_batches
    b = np.asarray(values[: m * n_batches]).reshape(n_batches, m).mean(axis=1)
    return float(np.mean(values)), float(np.std(b, ddof=1) / math.sqrt(n_batches))


def _batched(values, n_batches=N_BATCHES):
    m = len(values) // n_batches
    return np.asarray(values[: m * n_batches]).reshape(n_batches, m)


def simulate(cfg: MrrConfig) -> MrrResult:
    """Run one simulation and measure upsilon, c1, return autocorrelation and closure."""
    eps, r = simulate_series(cfg)
    # per-batch estimates so every standard error accounts for serial dependence
    rb = _batched(r)
    eb = _batched(eps[1:])
    ep = _batched(eps[:-1])
    var_b = np.mean(rb**2, axis=1)
    c1_b = np.mean(eb * ep, axis=1)
    cov_b = np.mean(rb[:, 1:] * rb[:, :-1], axis=1)
    closure_b = var_b - ((1.0 - c1_b**2) / 4.0 * cfg.s**2 + cfg.v0**2)
    k = rb.shape[0]

    def se(x):
        return float(np.std(x, ddof=1) / math.sqrt(k))

    var = float(np.mean(r**2))
    c1_hat = float(np.mean(eps[1:] * eps[:-1]))
    upsilon = math.sqrt(var)
    acf = float(np.mean(r[1:] * r[:-1]) / var) if var > 0 else 0.0
    closure = var - ((1.0 - c1_hat**2) / 4.0 * cfg.s**2 + cfg.v0**2)
    return MrrResult(
        config=cfg,
        measured_upsilon=upsilon,
        upsilon_stderr=se(var_b) / (2.0 * upsilon) if upsilon > 0 else 0.0,
        measured_c1=c1_hat,
        c1_stderr=se(c1_b),
        return_autocorr=acf,
        autocorr_stderr=se(cov_b) / var if var > 0 else 0.0,
        closure=closure,
        closure_stderr=se(closure_b),
    )


def simulate_replicas(cfg: MrrConfig, n_replicas: int):
    """Independent replicas, each with its own stream spawned from ``cfg.seed``."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_replicas)
    out = []
    for ss in seeds:
        seed = int(ss.generate_state(1)[0])
        out.append(simulate(MrrConfig(cfg.s, cfg.c1, cfg.v0, cfg.n_trades, seed)))
    return out


def vol_budget(cfg: MrrConfig, NT: int = 1, result: MrrResult = None) -> dict:
    """Share of the variance caused by trades, analytic and (if ``result``) measured.

    The horizon volatility is ``upsilon * sqrt(NT)``; the fraction does not
    depend on ``NT``.
    """
    if NT < 1:
        raise ValueError(f"NT must be >= 1, got {NT}")
    ups = cfg.upsilon
    out = {
        "trade_induced_fraction": (ups**2 - cfg.v0**2) / ups**2 if ups > 0 else 0.0,
        "sigma_T": ups * math.sqrt(NT),
    }
    if result is not None:
        u2 = result.measured_upsilon**2
        out["measured_fraction"] = (u2 - cfg.v0**2) / u2 if u2 > 0 else 0.0
        out["measured_sigma_T"] = result.measured_upsilon * math.sqrt(NT)
    return out

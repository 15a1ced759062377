"""Closed-form impact, multiplier and spread formulas.

Everything here is a pure function of its arguments. These are the
reference values the simulators are checked against.

Note on the GK multiplier: for ``sigma1 = 2.5%``, ``mcap / v1 = 200`` the
multiplier formula ``0.5 * sigma1 * (mcap / v1) / sqrt(tm)`` evaluates to
``2.5 / sqrt(tm)``. A figure of ``5 / sqrt(tm)`` is sometimes quoted for the
same inputs; that is twice the formula. :func:`gk_multiplier_tm` implements
the formula as written. The PDE simulator in this package produces a
permanent impact with prefactor 1 instead of 1/2 (see
``pde.run_metaorder``), which is the value the ``5 / sqrt(tm)`` figure
corresponds to.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import MemoryDistribution, ModelParams, StockRecord

SQRT_LAW_WARN = 0.05
SQRT_LAW_MAX = 0.25
PERMANENT_WARN = 0.05


class RegimeWarning(UserWarning):
    """Inputs are outside the regime a formula is meant for."""


@dataclass(frozen=True)
class ImpactInputs:
    """Inputs of the square-root law.

    ``Y`` is the order-one prefactor (about 0.5 for US stocks), ``sigma_T``
    the volatility over the horizon, ``Q`` the signed metaorder volume and
    ``V_T`` the market volume over the same horizon.
    """

    Y: float
    sigma_T: float
    Q: float
    V_T: float

    def __post_init__(self):
        if not self.Y > 0:
            raise ValueError(f"Y must be positive, got {self.Y}")
        if not self.sigma_T > 0:
            raise ValueError(f"sigma_T must be positive, got {self.sigma_T}")
        if not self.V_T > 0:
            raise ValueError(f"V_T must be positive, got {self.V_T}")
        check_participation(self.Q / self.V_T)


def check_participation(fraction):
    fraction = abs(fraction)
    if fraction > SQRT_LAW_MAX:
        raise ValueError(
            f"Q/V_T = {fraction:.3g} exceeds {SQRT_LAW_MAX}; the square-root law does not apply")
    if fraction > SQRT_LAW_WARN:
        warnings.warn(f"Q/V_T = {fraction:.3g} is above {SQRT_LAW_WARN}", RegimeWarning, stacklevel=3)


def square_root_impact(inputs: ImpactInputs) -> float:
    """Peak impact ``Y * sigma_T * sqrt(Q / V_T)``, signed like ``Q``."""
    q = inputs.Q
    return math.copysign(inputs.Y * inputs.sigma_T * math.sqrt(abs(q) / inputs.V_T), q) if q else 0.0


def impact_path(inputs: ImpactInputs, q: float) -> float:
    """Impact after a partial execution ``q`` of the metaorder."""
    if q * inputs.Q < 0 or abs(q) > abs(inputs.Q):
        raise ValueError(f"executed volume {q} outside [0, {inputs.Q}]")
    return square_root_impact(ImpactInputs(inputs.Y, inputs.sigma_T, q, inputs.V_T))


def permanent_impact(sigma1: float, v1: float, tm: float, Q: float) -> float:
    """Long-run impact ``0.5 * sigma1 * sqrt(tm) * Q / (v1 * tm)``.

    There is deliberately no execution-horizon argument: the permanent
    level does not depend on how fast the order was worked.
    """
    if not tm > 0:
        raise ValueError(f"memory time must be positive, got {tm}")
    if not v1 > 0 or not sigma1 > 0:
        raise ValueError("sigma1 and v1 must be positive")
    if math.isinf(tm):
        return 0.0
    if abs(Q) > PERMANENT_WARN * v1 * tm:
        warnings.warn(f"Q = {Q:.3g} is not small against v1*tm = {v1 * tm:.3g}",
                      RegimeWarning, stacklevel=2)
    return 0.5 * sigma1 * math.sqrt(tm) * Q / (v1 * tm)


def permanent_impact_distributed(sigma1: float, v1: float, rho: MemoryDistribution, Q: float) -> float:
    """Permanent impact when memory times are spread according to ``rho``."""
    moment = rho.inverse_sqrt_moment()
    if not math.isfinite(moment):
        raise ValueError("inverse square-root moment of the memory distribution diverges")
    return 0.5 * sigma1 * (Q / v1) * moment


def gk_multiplier_tm(rec: StockRecord, tm: float) -> float:
    """GK multiplier ``0.5 * sigma1 * (mcap / v1) / sqrt(tm)``."""
    if not tm > 0:
        raise ValueError(f"memory time must be positive, got {tm}")
    return 0.5 * rec.sigma1 * (rec.mcap / rec.v1) / math.sqrt(tm)


def gk_multiplier_delta(rec: StockRecord, delta: float) -> float:
    """GK multiplier with the memory time set by a volatility threshold.

    Substituting ``tm = delta**2 / sigma1**2`` into :func:`gk_multiplier_tm`
    gives ``0.5 * sigma1**2 / delta * mcap / v1``. The factors are
    grouped as in the ``tm`` form so both agree bit for bit whenever
    ``delta / sigma1`` is the exact square root of ``tm``.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return 0.5 * rec.sigma1 * (rec.mcap / rec.v1) * (rec.sigma1 / delta)


def mandate_multiplier(theta: float) -> float:
    """Multiplier ``1 / (1 - theta)`` of a fund holding a fixed equity share ``theta``."""
    if not 0 <= theta < 1:
        raise ValueError(f"equity fraction must lie in [0, 1), got {theta}")
    # evaluate on the shortest decimal form of theta: 1 - 0.8 is not 0.2 in binary
    return float(1 / (1 - Fraction(repr(float(theta)))))


@dataclass(frozen=True)
class MrrInputs:
    s: float
    c1: float
    v0: float
    NT: float = 1.0
    NQ: float = 1.0
    Nm: float = 1.0

    def __post_init__(self):
        if abs(self.c1) > 1:
            raise ValueError(f"|c1| must be <= 1, got {self.c1}")
        if self.s < 0 or self.v0 < 0:
            raise ValueError("spread and news volatility must be non-negative")
        if self.NT <= 0 or self.Nm <= 0 or self.NQ < 0:
            raise ValueError("trade counts must be positive")


def mrr_per_trade_vol(inputs: MrrInputs) -> float:
    """Per-trade volatility ``sqrt((1 - c1**2) / 4 * s**2 + v0**2)``."""
    return math.sqrt((1.0 - inputs.c1**2) / 4.0 * inputs.s**2 + inputs.v0**2)


def horizon_volatility(inputs: MrrInputs) -> float:
    """Volatility over ``NT`` trades, ``upsilon * sqrt(NT)``."""
    return mrr_per_trade_vol(inputs) * math.sqrt(inputs.NT)


def spread_form_permanent_impact(inputs: MrrInputs, k: float) -> float:
    """Permanent impact written with trade counts, ``k * s * NQ / sqrt(Nm)``.

    Only proportionality is known, so ``k`` is a free input.
    """
    return k * inputs.s * inputs.NQ / math.sqrt(inputs.Nm)


def asymptotic_decay(params: ModelParams, Q: float, t):
    """Infinite-memory relaxation ``sigma1 * Q / (v1 * sqrt(4 pi t))`` long after execution."""
    t = np.asarray(t, float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    out = params.sigma1 * Q / (params.v1 * np.sqrt(4.0 * math.pi * t))
    return float(out) if out.ndim == 0 else out


def stationary_book(params: ModelParams, x):
    """Stationary signed latent density ``-(lam/nu) sign(x) (1 - exp(-p|x|))``."""
    params.require_finite_memory()
    x = np.asarray(x, float)
    out = -params.far_density * np.sign(x) * -np.expm1(-params.p * np.abs(x))
    return float(out) if out.ndim == 0 else out

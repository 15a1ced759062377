"""Model parameters, derived quantities and small value types.

Two unit conventions are in use. In *absolute* mode prices are in currency
and ``sigma1`` is in currency per square-root day; in *relative* mode price
displacements are fractions and ``sigma1`` is a daily fractional
volatility. None of the formulas care which one is used, so the mode is
only carried along as run metadata.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

UNIT_MODES = ("absolute", "relative")


def _check_finite(name, value):
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """Latent order book parameters.

    Parameters
    ----------
    sigma1 : float
        Daily volatility, which is also the diffusion coefficient scale of
        reservation prices (the diffusion term reads ``sigma1**2 * phi''``).
    nu : float
        Cancellation (memory erasure) rate per day. ``nu == 0`` is the
        infinite-memory limit.
    lam : float
        Deposition intensity of new latent orders.
    liquidity : float, optional
        Slope of the linear book. Only used (and required) when ``nu == 0``,
        where ``lam / sqrt(nu * sigma1**2)`` is undefined; the limit
        ``nu, lam -> 0`` is taken at fixed liquidity.
    """

    sigma1: float
    nu: float
    lam: float
    liquidity: Optional[float] = None

    def __post_init__(self):
        for name in ("sigma1", "nu", "lam"):
            _check_finite(name, getattr(self, name))
        if self.sigma1 <= 0:
            raise ValueError(f"sigma1 must be positive, got {self.sigma1}")
        if self.nu < 0:
            raise ValueError(f"nu must be non-negative, got {self.nu}")
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if self.nu == 0:
            if self.liquidity is None or not self.liquidity > 0:
                raise ValueError("nu == 0 requires an explicit positive liquidity")
            if self.lam != 0:
                raise ValueError("nu == 0 is the nu, lam -> 0 limit; lam must be 0")
            _check_finite("liquidity", self.liquidity)
        elif self.liquidity is not None:
            raise ValueError("liquidity is derived from lam when nu > 0; do not pass it")

    @classmethod
    def infinite_memory(cls, sigma1: float, liquidity: float) -> "ModelParams":
        """Linear book with no cancellations (``nu = lam = 0``)."""
        return cls(sigma1=sigma1, nu=0.0, lam=0.0, liquidity=liquidity)

    @property
    def L(self) -> float:
        if self.nu == 0:
            return float(self.liquidity)
        return self.lam / math.sqrt(self.nu * self.sigma1**2)

    @property
    def v1(self) -> float:
        return self.sigma1**2 * self.L

    @property
    def tm(self) -> float:
        return math.inf if self.nu == 0 else 1.0 / self.nu

    @property
    def p(self) -> float:
        """Inverse length scale of the stationary book."""
        return math.sqrt(self.nu / self.sigma1**2)

    @property
    def book_length(self) -> float:
        return math.inf if self.nu == 0 else 1.0 / self.p

    @property
    def far_density(self) -> float:
        """Saturation value ``lam / nu`` of the stationary book."""
        return math.inf if self.nu == 0 else self.lam / self.nu

    def require_finite_memory(self):
        if self.nu == 0:
            raise ValueError("this operation needs nu > 0 (finite memory time)")

    def as_dict(self) -> dict:
        return {"sigma1": self.sigma1, "nu": self.nu, "lam": self.lam,
                "liquidity": self.L, "v1": self.v1, "tm": self.tm}


@dataclass(frozen=True)
class DerivedQuantities:
    liquidity: float
    v1: float
    tm: float
    p: float

    @property
    def book_length(self) -> float:
        return math.inf if self.p == 0 else 1.0 / self.p


def derive(params: ModelParams) -> DerivedQuantities:
    """Liquidity, daily volume, memory time and book scale of ``params``.

    For ``nu == 0`` the memory time and the book length come back as
    ``inf`` (``p == 0``); those values are only meaningful to the
    infinite-memory solvers.
    """
    return DerivedQuantities(liquidity=params.L, v1=params.v1, tm=params.tm, p=params.p)


def params_from_market(sigma1: float, v1: float, tm: float) -> ModelParams:
    """Invert :func:`derive`: build model parameters from market observables."""
    for name, value in (("sigma1", sigma1), ("v1", v1), ("tm", tm)):
        _check_finite(name, value)
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")
    nu = 1.0 / tm
    liquidity = v1 / sigma1**2
    lam = liquidity * math.sqrt(nu * sigma1**2)
    return ModelParams(sigma1=sigma1, nu=nu, lam=lam)


@dataclass(frozen=True)
class MetaorderSpec:
    """Parent order of signed volume ``Q`` executed at constant rate over ``T`` days."""

    Q: float
    T: float

    def __post_init__(self):
        _check_finite("Q", self.Q)
        _check_finite("T", self.T)
        if self.T <= 0:
            raise ValueError(f"execution horizon T must be positive, got {self.T}")

    @property
    def rate(self) -> float:
        return self.Q / self.T

    @property
    def side(self) -> int:
        return int(np.sign(self.Q))

    def participation(self, params: ModelParams) -> float:
        """Metaorder volume over the market volume traded during ``T``."""
        return abs(self.Q) / (params.v1 * self.T)


@dataclass(frozen=True)
class StockRecord:
    ticker: str
    sigma1: float
    v1: float
    mcap: float

    def __post_init__(self):
        for name in ("sigma1", "v1", "mcap"):
            value = getattr(self, name)
            _check_finite(name, value)
            if value <= 0:
                raise ValueError(f"{self.ticker}: {name} must be positive, got {value}")


@dataclass(frozen=True)
class MemoryDistribution:
    """Distribution of memory times (days).

    Build with :meth:`point`, :meth:`uniform`, :meth:`from_pdf` or
    :meth:`tabulated`. Only the inverse-square-root moment is ever needed.
    """

    kind: str
    tm: Optional[float] = None
    pdf: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    support: tuple = (0.0, math.inf)
    grid: Optional[tuple] = None
    rtol: float = 1e-8

    @classmethod
    def point(cls, tm: float) -> "MemoryDistribution":
        if not tm > 0 or not math.isfinite(tm):
            raise ValueError(f"point mass needs a finite positive memory time, got {tm}")
        return cls(kind="point", tm=float(tm), support=(tm, tm))

    @classmethod
    def from_pdf(cls, pdf, lower=0.0, upper=math.inf, rtol=1e-8) -> "MemoryDistribution":
        if lower < 0 or not upper > lower:
            raise ValueError(f"bad support [{lower}, {upper}]")
        dist = cls(kind="pdf", pdf=pdf, support=(float(lower), float(upper)), rtol=rtol)
        dist._validate_normalisation()
        return dist

    @classmethod
    def uniform(cls, lower: float, upper: float) -> "MemoryDistribution":
        width = upper - lower
        return cls.from_pdf(lambda x: np.full_like(np.asarray(x, float), 1.0 / width), lower, upper)

    @classmethod
    def tabulated(cls, x, density) -> "MemoryDistribution":
        """Piecewise-linear density through ``(x, density)``; zero outside."""
        x = np.asarray(x, float)
        density = np.asarray(density, float)
        if x.ndim != 1 or x.shape != density.shape or x.size < 2:
            raise ValueError("x and density must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(x) <= 0) or x[0] < 0:
            raise ValueError("x must be strictly increasing and non-negative")
        if np.any(density < 0):
            raise ValueError("density must be non-negative")
        dist = cls(kind="tabulated", grid=(tuple(x), tuple(density)), support=(x[0], x[-1]))
        dist._validate_normalisation()
        return dist

    def _validate_normalisation(self):
        mass = self.total_mass()
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"memory-time density integrates to {mass:.8g}, not 1")

    def total_mass(self) -> float:
        if self.kind == "point":
            return 1.0
        if self.kind == "tabulated":
            x, d = map(np.asarray, self.grid)
            return float(np.trapezoid(d, x))
        return self._quad(self.pdf)

    def _quad(self, f, lo=None, hi=None) -> float:
        if lo is None:
            lo, hi = self.support
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                value, _ = integrate.quad(lambda s: float(f(s)), lo, hi,
                                          epsrel=self.rtol, epsabs=0.0, limit=500)
            except integrate.IntegrationWarning as exc:
                raise ValueError(f"memory-time integral did not converge: {exc}") from None
        if not math.isfinite(value):
            raise ValueError("memory-time integral diverges")
        return value

    def inverse_sqrt_moment(self) -> float:
        """``int rho(x) / sqrt(x) dx``."""
        if self.kind == "point":
            return 1.0 / math.sqrt(self.tm)
        if self.kind == "tabulated":
            return _linear_density_moment(*map(np.asarray, self.grid))
        lo, _ = self.support
        if lo == 0:
            # substitute x = y**2: int 2 rho(y^2) dy keeps the 1/sqrt(x) endpoint tame
            return self._quad(lambda y: 2.0 * self.pdf(y * y), 0.0, math.sqrt(self.support[1]))
        return self._quad(lambda s: self.pdf(s) / math.sqrt(s))


def _linear_density_moment(x, d):
    # exact integral of a piecewise-linear density against x**-0.5
    a, b = x[:-1], x[1:]
    da, db = d[:-1], d[1:]
    slope = (db - da) / (b - a)
    i0 = 2.0 * (np.sqrt(b) - np.sqrt(a))
    i1 = (2.0 / 3.0) * (b**1.5 - a**1.5)
    return float(np.sum((da - slope * a) * i0 + slope * i1))

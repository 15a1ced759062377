"""Stock-universe ingestion, per-stock multipliers and the cross-sectional fit.

Input CSV schema: ``ticker,sigma1,adv,mcap`` with ``sigma1`` the daily
volatility as a fraction, ``adv`` the average daily traded value and
``mcap`` the market capitalisation, both in the same currency.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import closed_form as cf
from .core import StockRecord

HEADER = ("ticker", "sigma1", "adv", "mcap")
MAX_BAD_FRACTION = 0.10
MIN_FIT_RECORDS = 8


class IngestError(ValueError):
    """Too many malformed rows, or a header that does not match the schema."""

    def __init__(self, message, row_errors=()):
        super().__init__(message)
        self.row_errors = list(row_errors)


@dataclass
class Universe:
    records: list
    provenance: dict = field(default_factory=dict)
    row_errors: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.ticker in seen:
                raise ValueError(f"duplicate ticker {r.ticker!r}")
            seen.add(r.ticker)

    def __len__(self):
        return len(self.records)

    @property
    def tickers(self):
        return [r.ticker for r in self.records]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HEADER)
            for r in self.records:
                w.writerow([r.ticker, repr(r.sigma1), repr(r.v1), repr(r.mcap)])


def ingest(path) -> Universe:
    """Read a universe CSV, collecting bad rows with their line numbers.

    Bad rows are skipped and listed in ``row_errors``. More than 10% bad
    rows raises :class:`IngestError`. An empty file gives an empty universe
    and a warning.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    prov = {"source": str(path), "synthetic": False}
    if not rows:
        warnings.warn(f"{path} is empty", UserWarning, stacklevel=2)
        return Universe([], provenance=prov)
    header = tuple(h.strip() for h in rows[0])
    if header != HEADER:
        raise IngestError(f"{path}: header {','.join(header)!r} does not match {','.join(HEADER)!r}")
    records, errors, seen = [], [], set()
    body = [(i + 2, row) for i, row in enumerate(rows[1:]) if any(c.strip() for c in row)]
    for line, row in body:
        try:
            if len(row) != len(HEADER):
                raise ValueError(f"expected {len(HEADER)} fields, got {len(row)}")
            ticker = row[0].strip()
            if not ticker:
                raise ValueError("empty ticker")
            if ticker in seen:
                raise ValueError(f"duplicate ticker {ticker!r}")
            rec = StockRecord(ticker, float(row[1]), float(row[2]), float(row[3]))
        except ValueError as exc:
            errors.append((line, str(exc)))
            continue
        seen.add(ticker)
        records.append(rec)
    if body and len(errors) > MAX_BAD_FRACTION * len(body):
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in errors[:5])
        raise IngestError(f"{path}: {len(errors)} of {len(body)} rows are malformed ({detail})", errors)
    for ln, msg in errors:
        warnings.warn(f"{path}, line {ln}: {msg}", UserWarning, stacklevel=2)
    if not records:
        warnings.warn(f"{path} has no data rows", UserWarning, stacklevel=2)
    return Universe(records, provenance=prov, row_errors=errors)


def synthetic_universe(n: int, seed: int = 0, *, median_mcap: float = 1e10) -> Universe:
    """Seeded synthetic universe with stylised cross-sectional couplings.

    Market caps are log-normal, turnover falls slowly with size
    (``adv ~ mcap**0.8``) and volatility decreases with size. The output is
    labelled synthetic in its provenance.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = np.random.default_rng(seed)
    log_m = np.log(median_mcap) + 1.2 * rng.standard_normal(n)
    mcap = np.exp(log_m)
    rel = mcap / median_mcap
    adv = mcap / 250.0 * rel**-0.2 * np.exp(0.4 * rng.standard_normal(n))
    sigma1 = 0.02 * rel**-0.1 * np.exp(0.25 * rng.standard_normal(n))
    records = [StockRecord(f"SYN{i:05d}", float(s), float(a), float(m))
               for i, (s, a, m) in enumerate(zip(sigma1, adv, mcap))]
    return Universe(records, provenance={"source": "synthetic", "synthetic": True, "seed": seed, "n": n})


@dataclass(frozen=True)
class MultiplierTable:
    tickers: tuple
    mcap: np.ndarray
    M: np.ndarray
    mode: dict

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ticker", "M"])
            for t, m in zip(self.tickers, self.M):
                w.writerow([t, repr(float(m))])

    def to_points(self, path):
        """Whitespace-separated ``log10(mcap) M`` pairs for external plotting."""
        with open(path, "w") as fh:
            fh.write("# log10_mcap M\n")
            for x, m in zip(np.log10(self.mcap), self.M):
                fh.write(f"{float(x)!r} {float(m)!r}\n")


def multipliers(u: Universe, *, delta: Optional[float] = None, tm: Optional[float] = None) -> MultiplierTable:
    """Per-stock multiplier from a volatility threshold ``delta`` or a memory time ``tm``."""
    if (delta is None) == (tm is None):
        raise ValueError("give exactly one of delta and tm")
    if delta is not None:
        M = [cf.gk_multiplier_delta(r, delta) for r in u.records]
        mode = {"delta": delta}
    else:
        M = [cf.gk_multiplier_tm(r, tm) for r in u.records]
        mode = {"tm": tm}
    return MultiplierTable(tuple(u.tickers), np.array([r.mcap for r in u.records], float),
                           np.asarray(M, float), mode)


@dataclass(frozen=True)
class FitResult:
    """Cubic fit of ``M`` against ``log10(mcap)``; coefficients in increasing order."""

    coefficients: tuple
    residual_std: float
    mean_M: float
    std_M: float
    non_monotonic: bool
    n: int

    def __call__(self, log10_mcap):
        return np.polynomial.polynomial.polyval(log10_mcap, self.coefficients)

    def as_dict(self) -> dict:
        return {"coefficients": list(self.coefficients), "residual_std": self.residual_std,
                "mean_M": self.mean_M, "std_M": self.std_M, "non_monotonic": self.non_monotonic,
                "n": self.n}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.as_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _design(x):
    return np.vander(x, 4, increasing=True)


def summarize_and_fit(table: MultiplierTable) -> FitResult:
    """Mean and std of ``M`` and an OLS cubic in ``log10(mcap)``.

    ``non_monotonic`` is set when the fitted cubic has a turning point
    strictly inside the range of the data.
    """
    n = len(table.M)
    if n < MIN_FIT_RECORDS:
        raise ValueError(f"need at least {MIN_FIT_RECORDS} records for a cubic fit, got {n}")
    x = np.log10(table.mcap)
    A = _design(x)
    coef, _, rank, _ = np.linalg.lstsq(A, table.M, rcond=None)
    if rank < 4:
        raise np.linalg.LinAlgError(f"rank-deficient design (rank {rank}); market caps are not varied enough")
    resid = table.M - A @ coef
    deriv = np.polynomial.polynomial.polyder(coef)
    roots = np.polynomial.polynomial.polyroots(deriv) if np.any(deriv) else np.array([])
    real = roots[np.abs(np.imag(roots)) < 1e-12].real if roots.size else roots
    # a double root is an inflection, not a change of direction
    turning = [r for r in real if x.min() < r < x.max()
               and np.sign(np.polynomial.polynomial.polyval(r - 1e-6, deriv))
               != np.sign(np.polynomial.polynomial.polyval(r + 1e-6, deriv))]
    return FitResult(
        coefficients=tuple(float(c) for c in coef),
        residual_std=float(np.std(resid, ddof=min(4, n - 1))),
        mean_M=float(np.mean(table.M)),
        # shifting by one sample keeps the spread of identical values exactly zero
        std_M=float(np.std(table.M - table.M[0])),
        non_monotonic=bool(turning),
        n=n,
    )


def cost_estimate(rec: StockRecord, Q: float, T: float, Y: float = 0.5, *,
                  tm: Optional[float] = None, delta: Optional[float] = None) -> dict:
    """Transient (square-root law) and permanent impact of trading ``Q`` over ``T`` days.

    Quantities are relative price moves. The memory time comes from
    ``tm`` or from ``delta`` via ``tm = delta**2 / sigma1**2``; without
    either only the transient figure is computed. Regime problems are
    listed in ``flags`` rather than raised.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if tm is not None and delta is not None:
        raise ValueError("give at most one of delta and tm")
    if delta is not None:
        tm = (delta / rec.sigma1) ** 2
    flags = []
    V_T = rec.v1 * T
    frac = abs(Q) / V_T
    if frac > cf.SQRT_LAW_MAX:
        flags.append(f"Q/V_T = {frac:.3g} > {cf.SQRT_LAW_MAX}: square-root law not applicable")
        transient = math.nan
    else:
        if frac > cf.SQRT_LAW_WARN:
            flags.append(f"Q/V_T = {frac:.3g} > {cf.SQRT_LAW_WARN}: transient estimate unreliable")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", cf.RegimeWarning)
            transient = cf.square_root_impact(cf.ImpactInputs(Y, rec.sigma1 * math.sqrt(T), Q, V_T))
    permanent = None
    if tm is not None:
        if not T < tm:
            flags.append(f"T = {T:.3g} is not short against tm = {tm:.3g}")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", cf.RegimeWarning)
            permanent = cf.permanent_impact(rec.sigma1, rec.v1, tm, Q)
        flags.extend(str(w.message) for w in caught)
    return {"ticker": rec.ticker, "transient": transient, "permanent": permanent, "tm": tm, "flags": flags}

"""First-order correction to the price path in powers of sqrt(nu).

Writing ``x_t = x0_t + sqrt(nu) * x1_t`` and ``u = nu * t``, the correction
``x1`` measured in units of ``sigma1 * Q / v1`` is a function ``F(u)`` that
solves

    0 = F(u) + beta * int_0^u (sqrt(v) - sqrt(u)) / sqrt(pi u v (u - v)) e^v dv
             + int_0^u (F(u) - F(v)) / sqrt(pi (u - v)) e^v dv

Multiplying by ``exp(-u)`` keeps every weight bounded (only ``exp(v - u)``
with ``v <= u`` appears) and turns the problem into a second-kind Volterra
equation

    F(u) exp(-u) + int_0^u (F(u) - F(v)) exp(v - u) / sqrt(pi (u - v)) dv = -beta * J(u)

with ``J(u) = exp(-u) * int_0^u (sqrt(v) - sqrt(u)) e^v / sqrt(pi u v (u - v)) dv``.
Substituting ``v = u sin(theta)**2`` gives the smooth representation

    J(u) = -2 / sqrt(pi) * int_0^{pi/2} cos(theta)**2 / (1 + sin(theta))
           * exp(-u cos(theta)**2) dtheta

The memory integral is discretised with product-trapezoid weights that
integrate the ``(u - v)**-1/2`` singularity exactly against a piecewise
linear interpolant, and the solution is marched forward. The difference
``F(u) - F(v)`` is kept as it stands: for large ``u`` the operator nearly
annihilates constants (only ``F exp(-u)`` survives), so replacing the
weight sum by its exact value ``erf(sqrt(u))`` would let the quadrature
error swamp the level of the solution.

Because the equation is linear in ``(F, beta)``, the large-``u`` level is
proportional to ``beta``. Both the extrapolated plateau and the analytic
level ``1/2`` are reported so the two can be compared.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .core import ModelParams

ANALYTIC_F_INF = 0.5


class ConvergenceError(RuntimeError):
    """The marching scheme produced a non-finite or non-convergent solution."""


@dataclass(frozen=True)
class PerturbationParams:
    """Inputs of the rescaled correction problem.

    Parameters
    ----------
    beta : float
        Execution-style constant multiplying the inhomogeneous term.
    u_max : float
        Largest rescaled time ``nu * t``; at least 5.
    n_u : int
        Number of grid intervals on ``[0, u_max]``; at least 256.
    """

    beta: float = 1.0
    u_max: float = 20.0
    n_u: int = 2000

    def __post_init__(self):
        if not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta}")
        if not self.u_max >= 5:
            raise ValueError(f"u_max must be at least 5, got {self.u_max}")
        if int(self.n_u) != self.n_u or self.n_u < 256:
            raise ValueError(f"n_u must be an integer >= 256, got {self.n_u}")


@dataclass
class ScaledTrajectory:
    """Solved correction ``F(u)`` with its plateau estimates.

    ``F`` is in units of ``sigma1 * Q / v1``. ``f_inf`` is the plateau read
    off the solution, ``f_inf_analytic`` the closed-form level.
    """

    u: np.ndarray
    F: np.ndarray
    params: PerturbationParams
    f_inf: float
    f_inf_analytic: float = ANALYTIC_F_INF
    diagnostics: dict = field(default_factory=dict)

    def closed_form(self, f_inf: Optional[float] = None) -> np.ndarray:
        """``F_inf - beta * (1 - exp(-u)) / sqrt(u)`` on the grid (``F_inf`` at ``u = 0``)."""
        f_inf = self.f_inf if f_inf is None else f_inf
        return f_inf - self.params.beta * _tail_shape(self.u)

    def at(self, u) -> np.ndarray:
        return np.interp(u, self.u, self.F)

    def to_physical(self, params: ModelParams, Q: float):
        """Times ``u / nu`` and the correction ``sqrt(nu) * x1_t`` in price units."""
        params.require_finite_memory()
        scale = params.sigma1 * Q / params.v1
        return self.u / params.nu, math.sqrt(params.nu) * scale * self.F

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "F"])
            for u, f in zip(self.u, self.F):
                w.writerow([repr(float(u)), repr(float(f))])


def _tail_shape(u):
    """``(1 - exp(-u)) / sqrt(u)``, continuous at 0."""
    u = np.asarray(u, float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = -np.expm1(-u[pos]) / np.sqrt(u[pos])
    return out


def source_term(u, n_theta: int = 200) -> np.ndarray:
    """``J(u)``: the scaled inhomogeneous integral, evaluated through the angle substitution."""
    u = np.atleast_1d(np.asarray(u, float))
    g, w = np.polynomial.legendre.leggauss(n_theta)
    th = 0.25 * math.pi * (g + 1.0)
    w = 0.25 * math.pi * w
    c2 = np.cos(th) ** 2
    f = -2.0 * c2 / ((1.0 + np.sin(th)) * math.sqrt(math.pi))
    return np.exp(-np.multiply.outer(u, c2)) @ (f * w)


def _product_weights(a_hi, a_lo, h):
    """Weights of the endpoint values of a linear function against ``w**-1/2`` on ``[a_lo, a_hi]``.

    ``a`` is the distance ``u_i - v`` so the panel ``[v_j, v_j+1]`` maps to
    ``[a_lo, a_hi] = [u_i - v_j+1, u_i - v_j]``.
    """
    i0 = 2.0 * (np.sqrt(a_hi) - np.sqrt(a_lo))
    i1 = (2.0 / 3.0) * (a_hi**1.5 - a_lo**1.5)
    w_left = (i1 - a_lo * i0) / h
    w_right = (a_hi * i0 - i1) / h
    return w_left, w_right


def solve_F(p: PerturbationParams = PerturbationParams()) -> ScaledTrajectory:
    """March the scaled Volterra equation forward on a uniform ``u`` grid."""
    n = int(p.n_u)
    u = np.linspace(0.0, p.u_max, n + 1)
    h = u[1] - u[0]
    g = p.beta * source_term(u)
    F = np.empty(n + 1)
    # at u = 0 both integrals vanish and the diagonal is exp(0) + erf(0) = 1
    F[0] = -g[0]
    # the weights only depend on the distance in grid steps
    k = np.arange(n + 1) * h
    w_left_all, w_right_all = _product_weights(k[1:], k[:-1], h)
    inv_sqrt_pi = 1.0 / math.sqrt(math.pi)
    for i in range(1, n + 1):
        # panel j spans [u_j, u_j+1]; its distance index is i - 1 - j
        idx = i - 1 - np.arange(i)
        wl = w_left_all[idx]
        wr = w_right_all[idx]
        W = np.zeros(i + 1)
        W[:-1] += wr
        W[1:] += wl
        W *= inv_sqrt_pi
        decay = np.exp(u[: i + 1] - u[i])
        # discretising F(u) - F(v) directly: the discrete operator annihilates constants exactly
        diag = math.exp(-u[i]) + float(np.dot(W, decay))
        denom = diag - W[-1]
        if not denom > 0:
            raise ConvergenceError(f"singular product weight at u={u[i]:.4g}")
        F[i] = (np.dot(W[:-1] * decay[:-1], F[:i]) - g[i]) / denom
        if not math.isfinite(F[i]):
            raise ConvergenceError(f"non-finite solution at u={u[i]:.4g}")
    f_inf = plateau_estimate(u, F, p.beta)
    return ScaledTrajectory(u=u, F=F, params=p, f_inf=f_inf,
                            diagnostics={"h": h, "n_u": n, "F0": float(F[0])})


def plateau_estimate(u, F, beta) -> float:
    """Average of ``F(u) + beta * (1 - exp(-u)) / sqrt(u)`` over the upper half of the grid."""
    u = np.asarray(u, float)
    upper = u >= 0.5 * u[-1]
    return float(np.mean(np.asarray(F)[upper] + beta * _tail_shape(u[upper])))


def residual(traj: ScaledTrajectory, u_points=None) -> np.ndarray:
    """Residual of the original equation, scaled by ``exp(-u)``, at ``u_points``.

    Uses adaptive quadrature with algebraic weights and a cubic spline of
    the solution, independent of the marching weights.
    """
    if u_points is None:
        u_points = np.linspace(0.1, traj.u[-1], 60)
    spline = CubicSpline(traj.u, traj.F)
    beta = traj.params.beta
    out = []
    for u in np.atleast_1d(u_points):
        fu = float(spline(u))
        # (sqrt(v) - sqrt(u)) / sqrt(u - v) = -sqrt(u - v) / (sqrt(v) + sqrt(u)); only v**-1/2 is singular
        src, _ = integrate.quad(
            lambda v: -np.exp(v - u) * np.sqrt(u - v) / ((np.sqrt(v) + np.sqrt(u)) * np.sqrt(math.pi * u)),
            0.0, u, weight="alg", wvar=(-0.5, 0.0), limit=200)
        mem, _ = integrate.quad(
            lambda v: (fu - float(spline(v))) * np.exp(v - u) / math.sqrt(math.pi),
            0.0, u, weight="alg", wvar=(0.0, -0.5), limit=200)
        out.append(fu * math.exp(-u) + beta * src + mem)
    return np.asarray(out)


def f_infinity(sigma1: float, v1: float, Q: float) -> float:
    """Analytic plateau ``0.5 * sigma1 * Q / v1`` in price units."""
    if not sigma1 > 0 or not v1 > 0:
        raise ValueError("sigma1 and v1 must be positive")
    return ANALYTIC_F_INF * sigma1 * Q / v1

"""Numerical reference for the generalised Dickman law D_c.

The density is ``K x^(c-1)`` on (0, 1], used in closed form, and satisfies
``x f(x) = c * (mass of f over (x-1, x])`` beyond 1. The march carries the
window mass ``W(x)`` directly instead of differencing a CDF. K comes from
normalisation.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, NumericError
from .quadrature import adaptive_simpson

TAIL_TOL = 1e-10
NOISE_FLOOR = 1e-13


def _march(c: float, m: int, x_max: float, backend: str | None = None):
    """Unnormalised density (K = 1) and window mass on the grid i/m, i <= m * x_max."""
    n = int(round(x_max * m))
    h = 1.0 / m
    x = np.arange(n + 1) * h
    f = np.empty(n + 1)
    window = np.zeros(n + 1)
    with np.errstate(divide="ignore"):
        f[: m + 1] = x[: m + 1] ** (c - 1.0)
    window[m] = 1.0 / c
    k = np.arange(m + 1, dtype=float)
    # exact mass of x^(c-1) over (k h, (k+1) h]
    db = np.diff(k ** c) * h ** c / c
    kernels.get("delay_march", backend)(f, window, m, c, db)
    return x, f, window


@dataclass(frozen=True)
class DickmanReference:
    c: float
    h: float
    x_max: float
    x: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    cdf_values: np.ndarray = field(repr=False)
    K: float
    tail_window: float

    @property
    def m(self) -> int:
        return int(round(1.0 / self.h))

    @property
    def mass_below_1(self) -> float:
        return self.K / self.c

    @property
    def total_mass(self) -> float:
        return float(self.cdf_values[-1])

    @property
    def K_analytic(self) -> float:
        """exp(-gamma c) / Gamma(c), a cross-check on the normalising constant."""
        return math.exp(-np.euler_gamma * self.c - math.lgamma(self.c))

    @property
    def K_gap(self) -> float:
        return abs(self.K - self.K_analytic)

    def moment(self, p: int) -> float:
        m = self.m
        head = self.K / (self.c + p)
        xs, fs = self.x[m:], self.density[m:]
        return head + float(np.trapezoid(xs ** p * fs, xs))

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def variance(self) -> float:
        return self.moment(2) - self.moment(1) ** 2

    def cdf(self, x):
        return cdf(self, x)

    def quantile(self, u):
        return quantile(self, u)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.x, self.density, right=0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            head = self.K * np.power(np.where(x > 0, x, 1.0), self.c - 1.0)
        out = np.where((x > 0) & (x <= 1), head, out)
        return np.where(x <= 0, 0.0, out)


def build_reference(c: float, h: float = 1e-4, x_max: float | None = None,
                    backend: str | None = None) -> DickmanReference:
    """Tabulate density and CDF of D_c on the grid of step h (1/h must be an integer)."""
    if not c > 0:
        raise ValueError("c must be positive")
    if not 0 < h <= 1e-3:
        raise ValueError("grid step must lie in (0, 1e-3]")
    m = int(round(1.0 / h))
    if abs(m * h - 1.0) > 1e-9:
        raise ValueError("1/h must be an integer")
    floor = max(5.0, 5.0 * c)
    if x_max is not None and x_max < floor:
        raise ValueError(f"x_max must be at least {floor}")
    span = math.ceil(x_max if x_max is not None else floor)
    adaptive = x_max is None
    head = 1.0 / c
    for _ in range(40):
        x, f, window = _march(c, m, span, backend)
        if not np.all(np.isfinite(f[m:])):
            raise NumericError(f"march produced non-finite density values for c={c}")
        # past the rounding floor the window mass is noise; the density is zero there
        noise = np.flatnonzero(window[m:] <= NOISE_FLOOR * window[m])
        if noise.size:
            f[m + noise[0]:] = 0.0
            window[m + noise[0]:] = 0.0
        total = head + float(np.sum(0.5 * (f[m:-1] + f[m + 1:])) / m)
        if not adaptive:
            break
        below = np.flatnonzero(window[m:] < TAIL_TOL * total)
        if below.size:
            span = max(span if span <= floor else 0, math.ceil(x[m + below[0]]), math.ceil(floor))
            n = span * m + 1
            x, f, window = x[:n], f[:n], window[:n]
            break
        span += 5
    else:
        raise NumericError(f"tail mass still above {TAIL_TOL} at x_max={span}")
    if np.any(f < 0):
        raise NumericError(f"march produced negative density values for c={c}")
    body = np.concatenate([[0.0], np.cumsum(0.5 * (f[m:-1] + f[m + 1:]) / m)])
    total = head + body[-1]
    tail = window[-1] / total
    K = 1.0 / total
    density = f * K
    if c < 1:
        density[0] = math.inf
    cdf_vals = np.empty_like(x)
    cdf_vals[: m + 1] = K * x[: m + 1] ** c / c
    cdf_vals[m:] = K * (head + body)
    return DickmanReference(float(c), 1.0 / m, float(span), x, density, cdf_vals, K, float(tail))


def cdf(ref: DickmanReference, x):
    """Exact on [0, 1], linear interpolation on the grid beyond."""
    xa = np.asarray(x, dtype=float)
    out = np.interp(xa, ref.x, ref.cdf_values)
    inner = (xa > 0) & (xa <= 1)
    out = np.where(inner, ref.K * np.power(np.clip(xa, 0, 1), ref.c) / ref.c, out)
    out = np.where(xa <= 0, 0.0, out)
    out = np.where(xa >= ref.x_max, np.minimum(1.0, ref.cdf_values[-1]), out)
    return float(out) if np.ndim(x) == 0 else out


def quantile(ref: DickmanReference, u):
    """Generalised inverse inf{x : F(x) >= u}."""
    ua = np.asarray(u, dtype=float)
    if np.any(~((ua > 0) & (ua < 1))):
        raise DomainError("quantile level must lie in (0, 1)")
    F = ref.cdf_values
    i = np.clip(np.searchsorted(F, ua, side="left"), 1, F.shape[0] - 1)
    lo, hi = F[i - 1], F[i]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(hi > lo, (ua - lo) / (hi - lo), 1.0)
    out = ref.x[i - 1] + np.clip(t, 0, 1) * ref.h
    inner = ua <= ref.mass_below_1
    out = np.where(inner, np.power(ua * ref.c / ref.K, 1.0 / ref.c), out)
    return float(out) if np.ndim(u) == 0 else out


# --------------------------------------------------------------------------
# Dickman function


@functools.lru_cache(maxsize=8)
def _rho_table(span: int, m: int):
    x, f, _ = _march(1.0, m, span)
    return x, f


def _rho_hermite(t: np.ndarray, span: int, m: int) -> np.ndarray:
    x, r = _rho_table(span, m)
    h = 1.0 / m
    dr = np.zeros_like(r)
    dr[m:] = -r[:-m] / x[m:]
    i = np.clip((t * m).astype(np.int64), 0, x.shape[0] - 2)
    s = (t - x[i]) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * r[i] + h10 * h * dr[i] + h01 * r[i + 1] + h11 * h * dr[i + 1]


def dickman_rho(t, h: float = 1e-4, return_check: bool = False):
    """rho(t) with rho = 1 on [0, 1] and t rho'(t) = -rho(t - 1).

    Marched with steps h and h/2 and Richardson-combined; ``return_check`` also
    gives the largest gap between the two step sizes.
    """
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0):
        raise DomainError("rho is evaluated at t >= 0")
    m = int(round(1.0 / h))
    span = max(2, int(math.ceil(float(ta.max(initial=0.0)))) + 1)
    coarse = _rho_hermite(ta, span, m)
    fine = _rho_hermite(ta, span, 2 * m)
    out = np.where(ta <= 1, 1.0, (4 * fine - coarse) / 3)
    val = float(out) if np.ndim(t) == 0 else out
    if return_check:
        return val, float(np.max(np.abs(fine - coarse), initial=0.0))
    return val


# --------------------------------------------------------------------------
# Laplace transform


def log_laplace_exponent(s: float, tol: float = 1e-12) -> float:
    """The integral over (0, 1) of (1 - e^{-s x}) / x."""
    if s < 0:
        raise DomainError("s must be non-negative")
    if s == 0:
        return 0.0
    return adaptive_simpson(lambda x: s if x == 0 else -math.expm1(-s * x) / x, 0.0, 1.0, tol=tol)


def laplace_transform(c: float, s: float) -> float:
    """E exp(-s D_c) = exp(-c * integral over (0,1) of (1 - e^{-sx})/x)."""
    return math.exp(-c * log_laplace_exponent(s))

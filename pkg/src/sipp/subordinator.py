"""Small jumps of a pure-jump subordinator.

Jumps in (delta*eps, eps] form a Poisson process with intensity t*sigma. The
proposal intensity ``t * c_env / x`` is sampled exactly by log-uniform
inversion, and proposals are thinned with probability ``x sigma(x) / c_env``.
For the gamma family that probability is ``exp(-lam x)``, so acceptance tends
to 1 as eps shrinks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericError
from .measures import CountingMeasure, Horizon, MeasureBatch
from .quadrature import adaptive_simpson

MIN_ACCEPTANCE = 1e-6


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Levy density on (0, inf).

    ``gamma``: sigma(x) = alpha exp(-lam x) / x. ``custom``: pass ``density``
    and optionally ``small_mean`` (eps -> integral of x sigma(x) over (0, eps]).
    """

    kind: str = "gamma"
    alpha: float = 1.0
    lam: float = 1.0
    density: Callable | None = field(default=None, compare=False, repr=False)
    small_mean_fn: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == "gamma":
            if self.alpha < 0 or self.lam < 0:
                raise ValueError("gamma parameters must be non-negative")
        elif self.kind == "custom":
            if self.density is None:
                raise ValueError("custom Levy measure needs a density")
        else:
            raise ValueError(f"unknown Levy measure kind {self.kind!r}")

    def sigma(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gamma":
            return self.alpha * np.exp(-self.lam * x) / x
        return np.asarray(self.density(x), dtype=float)

    def x_sigma(self, x):
        """x * sigma(x), the thinning numerator."""
        x = np.asarray(x, dtype=float)
        if self.kind == "gamma":
            return self.alpha * np.exp(-self.lam * x)
        return x * self.sigma(x)

    def small_mean(self, eps: float) -> float:
        """Integral of x sigma(dx) over (0, eps]."""
        if eps <= 0:
            return 0.0
        if self.kind == "gamma":
            if self.lam == 0:
                return self.alpha * eps
            return -self.alpha * math.expm1(-self.lam * eps) / self.lam
        if self.small_mean_fn is not None:
            return float(self.small_mean_fn(eps))
        return adaptive_simpson(lambda x: float(self.x_sigma(x if x > 0 else eps * 1e-12)), 0.0, eps,
                                tol=1e-12 * eps)

    def mass(self, lo: float, hi: float) -> float:
        """Integral of sigma over (lo, hi], computed on the log scale."""
        if hi <= lo:
            return 0.0
        g = lambda s: float(self.x_sigma(math.exp(s)))
        return adaptive_simpson(g, math.log(lo), math.log(hi), tol=1e-12)

    def envelope(self, eps: float) -> float:
        """sup of x sigma(x) over (0, eps]."""
        if self.kind == "gamma":
            return self.alpha
        grid = eps * np.logspace(-12, 0, 4001)
        vals = self.x_sigma(grid)
        if not np.all(np.isfinite(vals)):
            raise NumericError("x sigma(x) is not finite near 0; no scale-invariant envelope")
        return float(vals.max()) * (1 + 1e-9)


def gamma(alpha: float = 1.0, lam: float = 1.0) -> LevyMeasureSpec:
    return LevyMeasureSpec("gamma", alpha, lam)


def small_jump_constant(spec: LevyMeasureSpec, eps: float) -> float:
    """eps^-1 * integral of x sigma(dx) over (0, eps]."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return spec.small_mean(eps) / eps


def scaled_window_mean(spec: LevyMeasureSpec, t: float, eps: float, a: float, b: float) -> float:
    """Expected number of scaled jumps x/eps in (a, b]."""
    return t * spec.mass(a * eps, b * eps)


class SmallJumpSampler:
    """Scaled jumps x/eps for x in (delta eps, eps] over time t; horizon (delta, 1]."""

    def __init__(self, spec: LevyMeasureSpec, t: float, eps: float, delta: float):
        if not 0 < delta < 1:
            raise ValueError("floor delta must lie in (0, 1)")
        if t < 0 or not eps > 0:
            raise ValueError("need t >= 0 and eps > 0")
        self.spec, self.t, self.eps, self.delta = spec, float(t), float(eps), float(delta)
        self.horizon = Horizon(self.delta, 1.0)
        self.c_env = spec.envelope(eps) if t > 0 else 0.0
        if self.c_env > 0 and self.c_env != spec.alpha:
            accept = spec.mass(delta * eps, eps) / (self.c_env * math.log(1 / delta))
            if accept < MIN_ACCEPTANCE:
                raise NumericError(f"envelope acceptance {accept:.2g} is pathological")
        self.c = small_jump_constant(spec, eps) * self.t
        self.omitted_mean = self.t * spec.small_mean(delta * eps) / eps

    def sample_batch(self, reps: int, rng) -> MeasureBatch:
        log_span = -math.log(self.delta)
        mean = self.t * self.c_env * log_span
        counts = rng.poisson(mean, size=reps) if mean > 0 else np.zeros(reps, dtype=np.int64)
        rep = np.repeat(np.arange(reps, dtype=np.int64), counts)
        u = 1.0 - rng.random(rep.shape[0])
        scaled = np.clip(np.exp(-log_span * (1.0 - u)), np.nextafter(self.delta, 1.0), 1.0)
        keep = rng.random(rep.shape[0]) * self.c_env < self.spec.x_sigma(scaled * self.eps)
        rep, scaled = rep[keep], scaled[keep]
        return MeasureBatch.from_rep_ids(reps, rep, scaled, np.ones(scaled.shape[0], dtype=np.int64), self.horizon)


def sample_small_jumps(spec: LevyMeasureSpec, t: float, eps: float, delta: float, rng) -> CountingMeasure:
    return SmallJumpSampler(spec, t, eps, delta).sample_batch(1, rng)[0]


def choose_floor(spec: LevyMeasureSpec, t: float, eps: float, tol: float) -> float:
    """Floor delta with t m(delta eps) / eps <= tol."""
    c = small_jump_constant(spec, eps)
    if t == 0 or c == 0:
        return 0.5
    delta = min(0.5, tol / (t * c))
    while t * spec.small_mean(delta * eps) / eps > tol:
        delta /= 2
    return delta


def small_jump_sum(spec: LevyMeasureSpec, t: float, eps: float, tol: float, rng, size: int | None = None):
    """Draws of eps^-1 Y_eps(t), the scaled sum of jumps below eps, to mean bias <= tol."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = 1 if size is None else size
    if t == 0:
        out = np.zeros(n)
    else:
        sampler = SmallJumpSampler(spec, t, eps, choose_floor(spec, t, eps, tol))
        out = sampler.sample_batch(n, rng).sum_in_unit_ball(closed=True)
    return float(out[0]) if size is None else out

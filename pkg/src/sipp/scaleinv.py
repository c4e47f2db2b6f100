"""Exact samplers for the scale-invariant Poisson process and Dickman laws.

The process with intensity ``c dt / t`` is sampled on a window ``(a, b]`` by
log-uniform inversion. Its points below 1 form the chain
``Q_1^{1/c}, (Q_1 Q_2)^{1/c}, ...``; the Dickman samplers walk that chain down
to the floor ``delta = tol / c``, which makes the expected omitted mass equal
to ``tol`` for every ``c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .errors import DomainError
from .measures import UNCHECKED, CountingMeasure, Horizon, MeasureBatch, norms

ROW_CHUNK = 1 << 16


@dataclass(frozen=True)
class EtaSpec:
    """Scale-invariant Poisson process with intensity c/t on (0, inf)."""

    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("intensity constant c must be positive")

    def mean_count(self, a: float, b: float) -> float:
        return self.c * math.log(b / a) if b > a else 0.0

    def void_probability(self, a: float, b: float) -> float:
        return (a / b) ** self.c if b > a else 1.0


def _eta_batch(c: float, a: float, b: float, reps: int, rng: np.random.Generator) -> MeasureBatch:
    horizon = Horizon(a, b)
    if b <= a:
        return MeasureBatch(np.zeros(reps + 1, dtype=np.int64), np.empty(0), np.empty(0, dtype=np.int64), horizon)
    log_ratio = math.log(b / a)
    counts = rng.poisson(c * log_ratio, size=reps)
    u = 1.0 - rng.random(int(counts.sum()))
    x = np.exp(math.log(a) + u * log_ratio)
    x = np.clip(x, np.nextafter(a, math.inf), b)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return MeasureBatch(offsets, x, np.ones(x.shape[0], dtype=np.int64), horizon)


class EtaSampler:
    """Batch sampler of the scale-invariant process restricted to (a, b]."""

    def __init__(self, c: float, a: float, b: float):
        if not 0 < a <= b:
            raise ValueError("window needs 0 < a <= b")
        self.spec = EtaSpec(c)
        self.c = float(c)
        self.a, self.b = float(a), float(b)
        self.horizon = Horizon(self.a, self.b)

    def sample_batch(self, reps: int, rng: np.random.Generator) -> MeasureBatch:
        return _eta_batch(self.c, self.a, self.b, reps, rng)

    def void_probability(self, a: float, b: float) -> float:
        return self.spec.void_probability(a, b)

    def __repr__(self):
        return f"EtaSampler(c={self.c}, window=({self.a}, {self.b}])"


def sample_eta_window(spec: EtaSpec | float, a: float, b: float, rng: np.random.Generator) -> CountingMeasure:
    c = spec.c if isinstance(spec, EtaSpec) else float(spec)
    if not 0 < a:
        raise ValueError("window start must be positive")
    return _eta_batch(c, a, max(a, b), 1, rng)[0]


# --------------------------------------------------------------------------
# Dickman chains


def _block_cols(c: float, log_floor: float) -> int:
    mean = c * log_floor
    return int(min(256, max(16, math.ceil(mean + 4.0 * math.sqrt(mean) + 8.0))))


def _radial_chain(c: float, tol: float, size: int, rng, emit: bool, backend: str | None = None):
    """Walk each row's chain down to the floor tol/c.

    Returns per-row sums, and with ``emit`` also (row, point) arrays with the
    points of every row in chain order.
    """
    if not c > 0 or not tol > 0:
        raise ValueError("c and tol must be positive")
    sums = np.zeros(size)
    log_floor = math.log(c / tol)
    if log_floor <= 0 or size == 0:
        empty = (np.empty(0, dtype=np.int64), np.empty(0))
        return (sums, *empty) if emit else sums
    kernel = kernels.get("radial_block", backend)
    cols = _block_cols(c, log_floor)
    rows_out, pts_out = [], []
    for lo in range(0, size, ROW_CHUNK):
        active = np.arange(lo, min(size, lo + ROW_CHUNK))
        log_s = np.zeros(active.shape[0])
        while active.shape[0]:
            u = rng.random((active.shape[0], cols))
            expo = -np.log1p(-u)
            pts, log_s, done = kernel(expo, log_s, 1.0 / c, log_floor)
            sums[active] += pts.sum(axis=1)
            if emit:
                r, j = np.nonzero(pts)
                rows_out.append(active[r])
                pts_out.append(pts[r, j])
            active, log_s = active[~done], log_s[~done]
    if not emit:
        return sums
    rows = np.concatenate(rows_out) if rows_out else np.empty(0, dtype=np.int64)
    pts = np.concatenate(pts_out) if pts_out else np.empty(0)
    order = np.argsort(rows, kind="stable")
    return sums, rows[order], pts[order]


def sample_dickman(c: float, tol: float = 1e-6, rng=None, size: int | None = None, backend: str | None = None):
    """Draw the generalised Dickman law D_c by summing the chain above tol/c.

    The result underestimates D_c by the omitted remainder, whose mean is at most ``tol``.
    """
    rng = np.random.default_rng(rng) if not hasattr(rng, "random") else rng
    out = _radial_chain(c, tol, 1 if size is None else size, rng, emit=False, backend=backend)
    return float(out[0]) if size is None else out


# --------------------------------------------------------------------------
# direction laws


class VectorLaw:
    """Law of a random vector in R^d minus the origin."""

    dimension: int

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def finite_support(self):
        """(vectors, probabilities) when the law is finitely supported, else None."""
        return None

    def norm_bounds(self):
        """(min, max) of |V| when known, else None."""
        sup = self.finite_support()
        if sup is None:
            return None
        nrm = norms(sup[0][sup[1] > 0])
        return float(nrm.min()), float(nrm.max())

    def mean(self) -> np.ndarray:
        vec, prob = self.finite_support()
        return prob @ vec


@dataclass(frozen=True, eq=False)
class DeterministicLaw(VectorLaw):
    vector: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.vector, dtype=float))
        object.__setattr__(self, "vector", v)

    @property
    def dimension(self) -> int:
        return self.vector.shape[0]

    def sample(self, size, rng):
        return np.broadcast_to(self.vector, (size, self.dimension)).copy()

    def finite_support(self):
        return self.vector[None, :], np.ones(1)


def axis(i: int, dimension: int) -> DeterministicLaw:
    v = np.zeros(dimension)
    v[i] = 1.0
    return DeterministicLaw(v)


@dataclass(frozen=True, eq=False)
class CategoricalLaw(VectorLaw):
    vectors: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        vec = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        p = np.asarray(self.probs, dtype=float)
        if vec.shape[0] != p.shape[0]:
            raise ValueError("one probability per support vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "probs", p)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def sample(self, size, rng):
        idx = np.searchsorted(np.cumsum(self.probs)[:-1], rng.random(size), side="right")
        return self.vectors[idx]

    def finite_support(self):
        return self.vectors, self.probs


@dataclass(frozen=True, eq=False)
class BernoulliSimplexLaw(VectorLaw):
    """U = (X, 1 - X) with X ~ Ber(p)."""

    p: float

    dimension = 2

    def sample(self, size, rng):
        x = (rng.random(size) < self.p).astype(float)
        return np.column_stack([x, 1.0 - x])

    def finite_support(self):
        return np.eye(2), np.array([self.p, 1.0 - self.p])


def _compositions(m: int, d: int):
    if d == 1:
        yield (m,)
        return
    for first in range(m, -1, -1):
        for rest in _compositions(m - first, d - 1):
            yield (first, *rest)


@dataclass(frozen=True, eq=False)
class MultinomialLaw(VectorLaw):
    """V = Multinomial(m; q) / m, coordinates summing to 1."""

    m: int
    q: tuple

    @property
    def dimension(self) -> int:
        return len(self.q)

    def sample(self, size, rng):
        return rng.multinomial(self.m, self.q, size=size) / self.m

    def finite_support(self):
        d, m = self.dimension, self.m
        if math.comb(m + d - 1, d - 1) > 100_000:
            return None
        counts = np.array(list(_compositions(m, d)))
        logq = np.log(np.asarray(self.q, dtype=float))
        with np.errstate(invalid="ignore"):
            logp = (math.lgamma(m + 1) - np.sum([[math.lgamma(x + 1) for x in row] for row in counts], axis=1)
                    + np.sum(np.where(counts > 0, counts * logq, 0.0), axis=1))
        p = np.exp(logp)
        return counts / m, p / p.sum()

    def norm_bounds(self):
        return 1.0 / math.sqrt(self.dimension), 1.0

    def mean(self):
        return np.asarray(self.q, dtype=float)


@dataclass(frozen=True, eq=False)
class UniformSphereLaw(VectorLaw):
    dimension: int

    def sample(self, size, rng):
        g = rng.standard_normal((size, self.dimension))
        return g / norms(g)[:, None]

    def norm_bounds(self):
        return 1.0, 1.0

    def mean(self):
        return np.zeros(self.dimension)


@dataclass(frozen=True, eq=False)
class RadialLaw(VectorLaw):
    """V = R * U with R drawn by ``radius(size, rng)`` independently of U."""

    direction: VectorLaw
    radius: Callable[[int, np.random.Generator], np.ndarray]
    bounds: tuple | None = None

    @property
    def dimension(self) -> int:
        return self.direction.dimension

    def sample(self, size, rng):
        u = self.direction.sample(size, rng)
        return u * np.asarray(self.radius(size, rng), dtype=float)[:, None]

    def norm_bounds(self):
        return self.bounds


@dataclass(frozen=True, eq=False)
class MultinomialUplift:
    """Multiplicity-dependent direction: V(x) = Multinomial(m x; q) / (m x)."""

    m: int
    q: tuple

    @property
    def dimension(self) -> int:
        return len(self.q)

    @property
    def bounds(self):
        return 1.0 / math.sqrt(self.dimension), 1.0

    def __call__(self, multiplicities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        trials = self.m * np.asarray(multiplicities, dtype=np.int64)
        if np.any(trials <= 0):
            raise DomainError("the conditional law is defined for multiplicities >= 1")
        if trials.shape[0] == 0:
            return np.empty((0, self.dimension))
        return rng.multinomial(trials, self.q) / trials[:, None]

    def at_one(self) -> MultinomialLaw:
        return MultinomialLaw(self.m, self.q)


@dataclass(frozen=True, eq=False)
class UpliftSpec:
    """How atoms on (0, inf) are moved to R^d: one vector per atom.

    Either ``law`` (independent of multiplicities) or ``conditional`` (a map
    from multiplicities to vectors, which must declare norm ``bounds``).
    """

    law: VectorLaw | None = None
    conditional: Callable | None = None
    bounds: tuple | None = None

    def __post_init__(self):
        if (self.law is None) == (self.conditional is None):
            raise ValueError("give exactly one of law or conditional")
        if self.conditional is not None:
            b = self.bounds if self.bounds is not None else getattr(self.conditional, "bounds", None)
            if b is None:
                raise ValueError("a multiplicity-dependent uplift must declare norm bounds")
            object.__setattr__(self, "bounds", tuple(b))
        elif self.bounds is None and self.law.norm_bounds() is not None:
            object.__setattr__(self, "bounds", tuple(self.law.norm_bounds()))
        if self.bounds is not None and not 0 < self.bounds[0] <= self.bounds[1] < math.inf:
            raise ValueError("bounds need 0 < eps <= r < inf")

    @property
    def dimension(self) -> int:
        return self.law.dimension if self.law is not None else self.conditional.dimension

    def vectors(self, multiplicities: np.ndarray, rng) -> np.ndarray:
        if self.conditional is not None:
            return self.conditional(multiplicities, rng)
        return self.law.sample(multiplicities.shape[0], rng)

    def horizon(self, source: Horizon) -> Horizon:
        # norms in (r lo, eps hi] can only come from source atoms inside (lo, hi]
        if self.bounds is None or not source.checked:
            return UNCHECKED
        eps, r = self.bounds
        return Horizon(r * source.lo, max(r * source.lo, eps * source.hi))


def _uplift_arrays(locations, multiplicities, spec: UpliftSpec, rng):
    v = spec.vectors(multiplicities, rng)
    if v.ndim == 1:
        v = v[:, None]
    if np.any(norms(v) <= 0):
        raise DomainError("uplift vector with zero norm")
    out = v * np.asarray(locations, dtype=float)[:, None]
    return out[:, 0] if spec.dimension == 1 else out


def uplift(mu: CountingMeasure, spec: UpliftSpec, rng) -> CountingMeasure:
    """Atom (z, m) becomes atom (V z, m), one fresh V per atom."""
    if mu.dimension != 1:
        raise ValueError("uplift acts on measures on (0, inf)")
    loc = _uplift_arrays(mu.locations, mu.multiplicities, spec, rng)
    return CountingMeasure(loc, mu.multiplicities, spec.horizon(mu.horizon))


def uplift_batch(batch: MeasureBatch, spec: UpliftSpec, rng) -> MeasureBatch:
    loc = _uplift_arrays(batch.locations, batch.multiplicities, spec, rng)
    return MeasureBatch(batch.offsets, loc, batch.multiplicities, spec.horizon(batch.horizon))


class UpliftedSampler:
    """Wraps a one-dimensional batch sampler and uplifts each realisation."""

    def __init__(self, base, spec: UpliftSpec):
        self.base, self.spec = base, spec
        self.c = getattr(base, "c", None)
        self.horizon = spec.horizon(base.horizon)

    def sample_batch(self, reps, rng):
        return uplift_batch(self.base.sample_batch(reps, rng), self.spec, rng)


def reduce_to_unit_law(law: VectorLaw, samples: int = 100_000, rng=None) -> CategoricalLaw:
    """Law of V/|V|: exact for finitely supported V, empirical otherwise."""
    support = law.finite_support()
    if support is not None:
        vec, prob = support
        keep = prob > 0
        vec, prob = vec[keep], prob[keep]
    else:
        rng = np.random.default_rng(rng) if not hasattr(rng, "random") else rng
        vec = law.sample(samples, rng)
        prob = np.full(samples, 1.0 / samples)
    nrm = norms(vec)
    if np.any(nrm <= 0):
        raise DomainError("V takes the value 0; its direction is undefined")
    units = vec / nrm[:, None]
    key = np.round(units, 12)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    p = np.bincount(inverse, weights=prob)
    first = np.zeros(uniq.shape[0], dtype=np.int64)
    first[inverse[::-1]] = np.arange(inverse.shape[0])[::-1]
    p = p / p.sum()
    return CategoricalLaw(units[first], p)


def sample_multivariate_dickman(c: float, law: VectorLaw, tol: float = 1e-6, rng=None,
                                size: int | None = None, return_radial: bool = False,
                                backend: str | None = None):
    """Draw D_c^U = sum_k U_k prod_{i<=k} Q_i^{1/c}.

    Radial retention is decided first, then one U per retained point. With
    ``return_radial`` the univariate chain sums of the same draws are returned too.
    """
    rng = np.random.default_rng(rng) if not hasattr(rng, "random") else rng
    n = 1 if size is None else size
    radial, rows, pts = _radial_chain(c, tol, n, rng, emit=True, backend=backend)
    u = law.sample(pts.shape[0], rng)
    out = np.column_stack([np.bincount(rows, weights=pts * u[:, j], minlength=n)
                           for j in range(law.dimension)])
    if size is None:
        out, radial = out[0], float(radial[0])
    return (out, radial) if return_radial else out


def sample_dickman_exponential_series(c: float, law: VectorLaw | None = None, tol: float = 1e-6,
                                      rng=None, size: int = 1) -> np.ndarray:
    """Cross-check sampler: sum of exp(-Z_k) U_k over a rate-c Poisson process Z on (0, log(c/tol)).

    Counts-then-uniform placement, independent of the chain construction.
    """
    rng = np.random.default_rng(rng) if not hasattr(rng, "random") else rng
    zmax = max(0.0, math.log(c / tol))
    counts = rng.poisson(c * zmax, size=size)
    rows = np.repeat(np.arange(size), counts)
    z = rng.random(rows.shape[0]) * zmax
    w = np.exp(-z)
    if law is None:
        return np.bincount(rows, weights=w, minlength=size)
    u = law.sample(rows.shape[0], rng)
    return np.column_stack([np.bincount(rows, weights=w * u[:, j], minlength=size)
                            for j in range(law.dimension)])

"""Convergence diagnostics: window conditions, Monte Carlo avoidance and
multiplicity checks, small-mass and heavy-tail sums, Laplace functionals,
directional intensities and distances to the Dickman reference.

Monte Carlo verdicts use 4 standard-error bands.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetError, RangeError, ResourceError
from .measures import MeasureBatch
from .models import PointProcessModel
from .parallel import as_streams, concat
from .quadrature import adaptive_simpson
from .reference import DickmanReference
from .scaleinv import EtaSampler

SIGMAS = 4.0


@dataclass(frozen=True)
class WindowCheckReport:
    n: int
    a: float
    b: float
    c: float
    product: float
    product_target: float
    sum: float
    sum_target: float
    indices: int

    @property
    def product_gap(self) -> float:
        return abs(self.product - self.product_target)

    @property
    def sum_gap(self) -> float:
        return abs(self.sum - self.sum_target)

    def row(self) -> dict:
        d = asdict(self)
        d.update(product_gap=self.product_gap, sum_gap=self.sum_gap)
        return d


def condition1_check(model: PointProcessModel, n: int, a: float, b: float, c: float | None = None) -> WindowCheckReport:
    """Product of q0 and sum of q1/q0 over {k : a z_n < z_k <= b z_n}."""
    c = model.limit_c if c is None else c
    if b <= a:
        return WindowCheckReport(n, a, b, c, 1.0, 1.0, 0.0, 0.0, 0)
    m = model.with_n(n)
    ks = m.window_indices(a, b)
    lam, _ = m.law.params(ks, m.sequence)
    q0, q1, _ = m.law.marginal_arrays(ks, m.sequence)
    with np.errstate(divide="ignore"):
        ratio = np.where(q0 > 0, q1 / np.where(q0 > 0, q0, 1.0), np.inf)
    product = float(np.exp(-np.sum(lam, dtype=np.longdouble)))
    return WindowCheckReport(n, a, b, c, product, (a / b) ** c, float(np.sum(ratio)), c * math.log(b / a), int(ks.size))


# --------------------------------------------------------------------------
# Monte Carlo drivers


def replicate(sampler, reps: int, rng, stat: Callable[[MeasureBatch], np.ndarray], key: str = "") -> np.ndarray:
    """Per-replication statistic, assembled in replication order."""
    streams = as_streams(rng, key)
    return concat(streams.map(lambda k, g: np.asarray(stat(sampler.sample_batch(k, g))), reps))


@dataclass(frozen=True)
class ProportionEstimate:
    estimate: float
    theory: float | None
    se: float
    reps: int

    @property
    def z(self) -> float:
        if self.theory is None:
            return math.nan
        se = self.se if self.se > 0 else math.sqrt(max(self.theory * (1 - self.theory), 1e-300) / self.reps)
        return (self.estimate - self.theory) / se

    def within(self, sigmas: float = SIGMAS) -> bool:
        return abs(self.z) <= sigmas


def _proportion(hits: np.ndarray, theory: float | None) -> ProportionEstimate:
    n = hits.shape[0]
    p = float(np.mean(hits)) if n else math.nan
    return ProportionEstimate(p, theory, math.sqrt(p * (1 - p) / n) if n else math.nan, n)


def avoidance_mc(sampler, window: tuple[float, float], reps: int, rng, c: float | None = None) -> ProportionEstimate:
    """Empirical P(no mass in (a, b]) against (a/b)^c."""
    a, b = window
    c = getattr(sampler, "c", None) if c is None else c
    theory = None if c is None else ((a / b) ** c if b > a else 1.0)
    if b <= a:
        return ProportionEstimate(1.0, 1.0, 0.0, reps)
    sampler.horizon.require(a, b)
    hits = replicate(sampler, reps, rng, lambda bt: bt.count_in(a, b) == 0, key=f"avoid:{a}:{b}")
    return _proportion(hits, theory)


@dataclass(frozen=True)
class MultiplicityEstimate:
    count_excess: ProportionEstimate
    atom_excess: ProportionEstimate


def multiplicity_excess_mc(sampler, window: tuple[float, float], reps: int, rng) -> MultiplicityEstimate:
    """P(mass in window > 1) and P(some atom in window has multiplicity >= 2)."""
    a, b = window
    if b <= a:
        zero = ProportionEstimate(0.0, None, 0.0, reps)
        return MultiplicityEstimate(zero, zero)
    sampler.horizon.require(a, b)

    def stat(bt):
        return np.column_stack([bt.count_in(a, b) > 1, bt.any_multiple_in(a, b)])

    both = replicate(sampler, reps, rng, stat, key=f"mult:{a}:{b}")
    return MultiplicityEstimate(_proportion(both[:, 0], None), _proportion(both[:, 1], None))


# --------------------------------------------------------------------------
# exact sums from marginals


def small_mass_mean(model: PointProcessModel, n: int, eps: float) -> float:
    """(1/z_n) * sum over z_k <= eps z_n of z_k E X_k."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    m = model.with_n(n)
    ks = m.window_indices(0.0, eps)
    if ks.size == 0:
        return 0.0
    loc = np.asarray(m.sequence.z(ks) / m.sequence.z([n])[0], dtype=float)
    _, _, mean = m.law.marginal_arrays(ks, m.sequence)
    return float(np.sum(loc * mean))


@dataclass(frozen=True)
class HeavyTailReport:
    value: float
    tail_estimate: float
    truncation_index: int
    upper: float

    @property
    def total(self) -> float:
        return self.value + self.tail_estimate


def heavy_tail_mass(model: PointProcessModel, n: int, r: float, alpha: float,
                    upper: float | None = None) -> HeavyTailReport:
    """z_n^alpha * sum over z_k > r z_n of z_k^-alpha E X_k.

    Summed exactly up to ``upper * z_n``; beyond that the terms are estimated
    from the intensity of the last factor-2 window as if it were scale
    invariant, which gives ``c_hat (1/upper)^alpha / alpha``.
    """
    if not (r > 0 and alpha > 0):
        raise ValueError("r and alpha must be positive")
    m = model.with_n(n)
    seq = m.sequence
    zn = seq.z([n])[0]
    if seq.kind == "custom":
        last = float(np.asarray(seq.values, dtype=float)[-1] / float(zn))
        upper = last if upper is None else min(upper, last)
        if upper <= r:
            return HeavyTailReport(0.0, 0.0, len(seq.values), r)
    else:
        upper = r * 1000.0 ** (1.0 / alpha) if upper is None else upper
    for _ in range(60):
        try:
            ks = seq.window_indices(n, r, upper) if seq.kind != "custom" else \
                np.arange(seq.upper_index(np.longdouble(r) * zn) + 1, len(seq.values) + 1)
            break
        except (RangeError, BudgetError, ResourceError):
            upper = r + (upper - r) / 2
    else:
        raise RangeError("no feasible truncation of the heavy-tail sum")
    if ks.size == 0:
        return HeavyTailReport(0.0, 0.0, 0, upper)
    loc = np.asarray(seq.z(ks) / zn, dtype=float)
    _, _, mean = m.law.marginal_arrays(ks, seq)
    value = float(np.sum(loc ** -alpha * mean))
    lo = max(r, upper / 2)
    sel = loc > lo
    c_hat = float(np.sum(mean[sel])) / math.log(upper / lo)
    return HeavyTailReport(value, c_hat * upper ** -alpha / alpha, int(ks[-1]), float(upper))


@dataclass(frozen=True)
class TailTable:
    alpha: float
    rows: list
    verdict: str


def _loglog_slope(ts, vals) -> float:
    pos = vals > 0
    if np.count_nonzero(pos) < 2:
        return 0.0
    return float(np.polyfit(np.log(ts[pos]), np.log(vals[pos]), 1)[0])


def uplift_tail_check(law, alpha: float, size: int, ts: Sequence[float], rng, threshold: float = 0.25) -> TailTable:
    """Rows (t, t P(|V| >= t), t^alpha P(|V| <= 1/t)) and a flatness verdict.

    The verdict is "growing" when either column rises faster than t^threshold
    on a log-log fit over the grid, else "bounded on tested range".
    """
    from .measures import norms

    rng = np.random.default_rng(rng) if not hasattr(rng, "random") else rng
    ts = np.asarray(sorted(ts), dtype=float)
    v = law.sample(size, rng)
    nrm = np.sort(norms(v) if np.ndim(v) > 1 else np.abs(v))
    upper = 1.0 - np.searchsorted(nrm, ts, side="left") / size
    lower = np.searchsorted(nrm, 1.0 / ts, side="right") / size
    big, small = ts * upper, ts ** alpha * lower
    rows = [(float(t), float(x), float(y)) for t, x, y in zip(ts, big, small)]
    growing = max(_loglog_slope(ts, big), _loglog_slope(ts, small)) > threshold
    return TailTable(alpha, rows, "growing" if growing else "bounded on tested range")


# --------------------------------------------------------------------------
# Laplace functionals


@dataclass(frozen=True)
class Tent:
    """Piecewise-linear bump on [lo, hi] with the given height at ``peak``."""

    lo: float
    peak: float
    hi: float
    height: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        up = (x - self.lo) / (self.peak - self.lo)
        down = (self.hi - x) / (self.hi - self.peak)
        return self.height * np.clip(np.minimum(up, down), 0.0, None)

    @property
    def support(self):
        return self.lo, self.hi

    @property
    def breakpoints(self):
        return (self.lo, self.peak, self.hi)


def eta_laplace_exact(c: float, f: Callable, breakpoints: Sequence[float]) -> float:
    """exp(-c * integral of (1 - e^{-f(t)})/t), integrated piecewise between breakpoints."""
    g = lambda t: -math.expm1(-float(f(t))) / t
    total = sum(adaptive_simpson(g, lo, hi, tol=1e-12) for lo, hi in zip(breakpoints[:-1], breakpoints[1:]))
    return math.exp(-c * total)


def model_laplace_exact(model: PointProcessModel, f: Callable, support: tuple[float, float]) -> float:
    """Exact E exp(-nu_n f) from the marginal laws, for f vanishing outside ``support``."""
    lo, hi = support
    ks = model.window_indices(lo, hi)
    if ks.size == 0:
        return 1.0
    loc = np.asarray(model.sequence.z(ks) / model.sequence.z([model.n])[0], dtype=float)
    theta = np.asarray(f(loc), dtype=float)
    lam, u = model.law.params(ks, model.sequence)
    kind = model.law.sampled_as
    if kind == "poisson":
        logs = -u * -np.expm1(-theta)
    elif kind == "bernoulli":
        logs = np.log1p(-u * -np.expm1(-theta))
    else:
        q0 = 1.0 - u
        logs = np.log(q0) - np.log1p(-u * np.exp(-theta))
    return float(np.exp(np.sum(logs)))


@dataclass(frozen=True)
class LaplaceEstimate:
    estimate: float
    exact: float | None
    se: float
    reps: int

    @property
    def z(self) -> float:
        if self.exact is None or self.se == 0:
            return 0.0 if self.exact is None or self.estimate == self.exact else math.inf
        return (self.estimate - self.exact) / self.se

    def within(self, sigmas: float = SIGMAS) -> bool:
        return abs(self.z) <= sigmas


def empirical_laplace(sampler, f, reps: int, rng, exact: float | None = None) -> LaplaceEstimate:
    """Mean of exp(-integral of f) over replications.

    ``f`` needs ``support`` (and ``breakpoints`` for the exact value); when the
    sampler is the scale-invariant process the exact value is computed.
    """
    support = getattr(f, "support", None)
    if support is None:
        raise ValueError("test function must declare its support")
    lo, hi = support
    if hi <= lo:
        return LaplaceEstimate(1.0, 1.0, 0.0, reps)
    sampler.horizon.require(lo, hi)
    if exact is None and isinstance(sampler, EtaSampler):
        exact = eta_laplace_exact(sampler.c, f, getattr(f, "breakpoints", support))
    vals = replicate(sampler, reps, rng, lambda bt: np.exp(-bt.integrate(f)), key=f"laplace:{lo}:{hi}")
    return LaplaceEstimate(float(vals.mean()), exact, float(vals.std(ddof=1) / math.sqrt(reps)), reps)


# --------------------------------------------------------------------------
# distances


@dataclass(frozen=True)
class DistanceReport:
    kind: str
    size: int
    value: float
    reference: str


def _ref_cdf(ref):
    if isinstance(ref, DickmanReference):
        return ref.cdf, f"dickman(c={ref.c:g}, h={ref.h:g})", ref.x_max
    return ref, getattr(ref, "__name__", "explicit"), math.inf


def ks_distance(samples, ref) -> DistanceReport:
    """sup |F_N - F| for a continuous reference F."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.shape[0]
    cdf, name, top = _ref_cdf(ref)
    if n and (x[0] < 0 or x[-1] > top):
        warnings.warn("samples outside the reference range were folded into its end bins", stacklevel=2)
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - F)), float(np.max(F - (i - 1) / n))) if n else math.nan
    return DistanceReport("KS", n, d, name)


def wasserstein1(samples, ref: DickmanReference) -> DistanceReport:
    """Mean of |x_(i) - Q((i - 1/2)/N)| over the sorted sample."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.shape[0]
    if n and (x[0] < 0 or x[-1] > ref.x_max):
        warnings.warn("samples outside the reference range", stacklevel=2)
    q = ref.quantile((np.arange(n) + 0.5) / n)
    return DistanceReport("W1", n, float(np.mean(np.abs(x - q))), _ref_cdf(ref)[1])


# --------------------------------------------------------------------------
# directional intensity


@dataclass(frozen=True)
class IntensityRow:
    a: float
    b: float
    estimate: float
    se: float


@dataclass(frozen=True)
class DirectionalReport:
    rows: list = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        for i, r in enumerate(self.rows):
            for s in self.rows[i + 1:]:
                se = math.hypot(r.se, s.se)
                if abs(r.estimate - s.estimate) > SIGMAS * se and r.estimate != s.estimate:
                    return False
        return True


def directional_intensity(batch: MeasureBatch, directions, windows: Sequence[tuple[float, float]]) -> DirectionalReport:
    """Mean count in directions x (a, b], divided by log(b/a), per window."""
    if len(windows) < 2:
        raise ValueError("need at least two windows")
    rows = []
    for a, b in windows:
        counts = batch.count_in(a, b, directions).astype(float)
        L = math.log(b / a)
        rows.append(IntensityRow(a, b, float(counts.mean()) / L,
                                 float(counts.std(ddof=1)) / math.sqrt(counts.shape[0]) / L))
    return DirectionalReport(rows)


def intensities_agree(r1: DirectionalReport, r2: DirectionalReport, sigmas: float = SIGMAS) -> bool:
    for x, y in zip(r1.rows, r2.rows):
        se = math.hypot(x.se, y.se)
        if abs(x.estimate - y.estimate) > sigmas * se and x.estimate != y.estimate:
            return False
    return True

"""One-dimensional models nu_n = sum_k X_k delta_{z_k / z_n}.

A model is a positive increasing sequence ``z_k`` with independent
multiplicities ``X_k``. Windows ``(a z_n, b z_n]`` are enumerated with
``np.longdouble`` comparisons on ``z``.

Sampling uses a Poisson embedding. With ``lam_k = -log P(X_k = 0)``, drop
``Poisson(sum lam)`` uniform marks on the concatenated intervals of lengths
``lam_k``. Index k is hit with probability ``1 - q0_k``, independently
across k. Hits then become the exact law: one atom for Bernoulli, the hit
count for Poisson, and ``1 + Geom`` for geometric. Work is proportional to the
number of non-zero ``X_k`` rather than to the window size.
"""
from __future__ import annotations

import itertools
import json
import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import numtheory
from .errors import BudgetError, ConfigError, DomainError, RangeError
from .measures import CountingMeasure, Horizon, MeasureBatch

LD = np.longdouble
SEQUENCE_KINDS = ("primes-log", "log-k", "linear-k", "sqrt-ratio", "custom")
LAW_KINDS = ("geometric", "bernoulli", "poisson", "theorem-ex")
MAX_WINDOW_INDICES = 200_000_000


class _SqrtRatioTable:
    """z_0 = z_1 = 1, z_k = z_{k-1} sqrt(k) / (sqrt(k) - 1), grown on demand."""

    def __init__(self):
        self._z = np.ones(2, dtype=LD)
        self._lock = threading.Lock()

    def upto(self, k: int) -> np.ndarray:
        with self._lock:
            have = self._z.shape[0] - 1
            if have < k:
                k = max(k, 2 * have)
                j = np.arange(have + 1, k + 1, dtype=LD)
                s = np.sqrt(j)
                logs = np.log(s) - np.log(s - 1)
                tail = self._z[-1] * np.exp(np.cumsum(logs))
                self._z = np.concatenate([self._z, tail])
            return self._z


_sqrt_ratio = _SqrtRatioTable()


@dataclass(frozen=True)
class SequenceSpec:
    """Support sequence z_k. ``values`` is used by the custom kind only (z_1, z_2, ...)."""

    kind: str
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in SEQUENCE_KINDS:
            raise ConfigError(f"unknown sequence kind {self.kind!r}")
        if self.kind == "custom":
            v = np.asarray(self.values, dtype=float)
            if v.size == 0 or np.any(v <= 0) or np.any(np.diff(v) < 0):
                raise ConfigError("custom sequence must be positive and non-decreasing")

    @property
    def k0(self) -> int:
        """First index carrying an atom."""
        return 2 if self.kind == "log-k" else 1

    def z(self, ks) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.int64)
        if ks.size and ks.min() < self.k0:
            raise RangeError(f"{self.kind} starts at k={self.k0}")
        kind = self.kind
        if kind == "linear-k":
            return ks.astype(LD)
        if kind == "log-k":
            return np.log(ks.astype(LD))
        if kind == "primes-log":
            top = int(ks.max()) if ks.size else 1
            table = numtheory.primes_count(top)
            return np.log(table.primes[ks - 1].astype(LD))
        if kind == "sqrt-ratio":
            top = int(ks.max()) if ks.size else 1
            return _sqrt_ratio.upto(top)[ks]
        v = np.asarray(self.values, dtype=LD)
        if ks.size and ks.max() > v.shape[0]:
            raise RangeError("custom sequence is too short")
        return v[ks - 1]

    def z_prev(self, ks) -> np.ndarray:
        """z_{k-1}, with 0 where the predecessor is not a positive location."""
        ks = np.asarray(ks, dtype=np.int64)
        out = np.zeros(ks.shape, dtype=LD)
        if self.kind == "sqrt-ratio":
            return _sqrt_ratio.upto(int(ks.max()) if ks.size else 1)[ks - 1]
        has = ks - 1 >= self.k0
        out[has] = self.z(ks[has] - 1)
        return out

    def upper_index(self, x) -> int:
        """Largest k with z_k <= x, or k0 - 1 when there is none."""
        x = LD(x)
        kind = self.kind
        if kind == "primes-log":
            bound = float(np.exp(x)) if x < 700 else math.inf
            if not math.isfinite(bound) or bound > numtheory.DEFAULT_MAX_LIMIT:
                raise RangeError(f"z <= {float(x)} needs primes up to {bound:.3g}, beyond the sieve budget")
            table = numtheory.primes_upto(int(bound) + 2)
            return table.count_log_le(x)
        if kind == "custom":
            v = np.asarray(self.values, dtype=LD)
            k = int(np.searchsorted(v, x, side="right"))
            if k == v.shape[0]:
                raise RangeError("custom sequence too short to cover the window")
            return k
        if kind == "linear-k":
            guess = math.floor(float(x))
        elif kind == "log-k":
            guess = math.floor(math.exp(min(float(x), 700.0)))
        else:
            guess = 2
            while _sqrt_ratio.upto(guess)[guess] <= x:
                guess *= 2
            table = _sqrt_ratio.upto(guess)
            return int(np.searchsorted(table, x, side="right")) - 1
        if guess > MAX_WINDOW_INDICES:
            raise BudgetError(f"window would hold about {guess} indices")
        guess = max(guess, self.k0 - 1)
        while self.z([guess + 1])[0] <= x:
            guess += 1
        while guess >= self.k0 and self.z([guess])[0] > x:
            guess -= 1
        return guess

    def window_indices(self, n: int, a: float, b: float) -> np.ndarray:
        """Indices k with a z_n < z_k <= b z_n (a = 0 gives all k from k0)."""
        if n < self.k0:
            raise RangeError(f"scaling index must be >= {self.k0}")
        if a < 0 or b < a:
            raise ValueError("window needs 0 <= a <= b")
        zn = self.z([n])[0]
        hi = self.upper_index(LD(b) * zn)
        lo = self.k0 if a == 0 else self.upper_index(LD(a) * zn) + 1
        lo = max(lo, self.k0)
        if hi - lo + 1 > MAX_WINDOW_INDICES:
            raise BudgetError(f"window holds {hi - lo + 1} indices")
        return np.arange(lo, hi + 1, dtype=np.int64)


@dataclass(frozen=True)
class Marginals:
    q0: float
    q1: float
    mean: float


def _primes_at(ks) -> np.ndarray:
    ks = np.asarray(ks, dtype=np.int64)
    top = int(ks.max()) if ks.size else 1
    return numtheory.primes_count(top).primes[ks - 1].astype(np.float64)


@dataclass(frozen=True)
class MultiplicityLaw:
    """Law of X_k as a function of k.

    rules:
      geometric  -- "prime": Geom(1 - 1/p_k); "klogk": Geom(1 - 1/(k log k));
                    "custom": ``fn(ks) -> P(X_k = 0)``
      bernoulli  -- "prime": Ber(1/(1 + p_k)); "records": Ber(1/k);
                    "zero": X_k = 0; "custom": ``fn(ks) -> P(X_k = 1)``
      poisson    -- "prime": mean 1/p_k; "custom": ``fn(ks) -> mean``
      theorem-ex -- P(X_k = 0) = (z_{k-1}/z_k)^c realised as geometric;
                    X_k = 0 where z_{k-1} is not positive
    """

    kind: str
    rule: str = "custom"
    c: float = 1.0
    fn: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        allowed = {
            "geometric": ("prime", "klogk", "custom"),
            "bernoulli": ("prime", "records", "zero", "custom"),
            "poisson": ("prime", "custom"),
            "theorem-ex": ("custom", "theorem-ex"),
        }
        if self.kind not in allowed:
            raise ConfigError(f"unknown law kind {self.kind!r}")
        if self.rule not in allowed[self.kind]:
            raise ConfigError(f"rule {self.rule!r} is not available for {self.kind}")
        if self.kind != "theorem-ex" and self.rule == "custom" and self.fn is None:
            raise ConfigError("custom rule needs fn")
        if not self.c > 0:
            raise ConfigError("c must be positive")

    @property
    def sampled_as(self) -> str:
        return "geometric" if self.kind == "theorem-ex" else self.kind

    def params(self, ks, seq: SequenceSpec) -> tuple[np.ndarray, np.ndarray]:
        """(lam, u) with lam = -log P(X=0) and u = 1 - P(X=0), computed without cancellation.

        For Poisson laws ``u`` is the mean instead.
        """
        ks = np.asarray(ks, dtype=np.int64)
        kind, rule = self.kind, self.rule
        if kind == "theorem-ex":
            zp, z = seq.z_prev(ks), seq.z(ks)
            pos = zp > 0
            log_ratio = np.zeros(ks.shape)
            log_ratio[pos] = np.asarray(self.c * (np.log(zp[pos]) - np.log(z[pos])), dtype=float)
            lam = -log_ratio
            return lam, -np.expm1(log_ratio)
        if kind == "poisson":
            mu = 1.0 / _primes_at(ks) if rule == "prime" else np.asarray(self.fn(ks), dtype=float)
            return mu.copy(), mu
        if kind == "geometric":
            if rule == "prime":
                u = 1.0 / _primes_at(ks)
            elif rule == "klogk":
                kf = ks.astype(float)
                u = 1.0 / (kf * np.log(kf))
            else:
                u = 1.0 - np.asarray(self.fn(ks), dtype=float)
        else:
            if rule == "prime":
                u = 1.0 / (1.0 + _primes_at(ks))
            elif rule == "records":
                u = 1.0 / ks.astype(float)
            elif rule == "zero":
                u = np.zeros(ks.shape)
            else:
                u = np.asarray(self.fn(ks), dtype=float)
        if np.any(u < 0) or np.any(u > 1):
            raise DomainError("multiplicity law produced a probability outside [0, 1]")
        with np.errstate(divide="ignore"):
            lam = -np.log1p(-u)
        return lam, u

    def marginal_arrays(self, ks, seq: SequenceSpec):
        lam, u = self.params(ks, seq)
        if self.kind == "poisson":
            q0 = np.exp(-u)
            return q0, u * q0, u
        q0 = 1.0 - u
        if self.sampled_as == "bernoulli":
            return q0, u, u
        with np.errstate(divide="ignore", invalid="ignore"):
            mean = np.where(q0 > 0, u / q0, np.inf)
        return q0, q0 * u, mean

    def marginals(self, k: int, seq: SequenceSpec) -> Marginals:
        q0, q1, mean = self.marginal_arrays(np.array([k]), seq)
        return Marginals(float(q0[0]), float(q1[0]), float(mean[0]))


def _hit_batch(reps: int, lam: np.ndarray, rng: np.random.Generator):
    """Rep ids, local index and hit counts of the Poisson embedding."""
    finite = np.isfinite(lam)
    lam_f = np.where(finite, lam, 0.0)
    cum = np.cumsum(lam_f)
    total = float(cum[-1]) if cum.size else 0.0
    if total <= 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, empty
    counts = rng.poisson(total, size=reps)
    rep = np.repeat(np.arange(reps, dtype=np.int64), counts)
    pos = rng.random(rep.shape[0]) * total
    idx = np.searchsorted(cum, pos, side="right")
    # pos can round up to total; the last positive interval owns that point
    idx = np.minimum(idx, np.flatnonzero(lam_f > 0)[-1])
    key = rep * lam.shape[0] + idx
    uniq, hits = np.unique(key, return_counts=True)
    return uniq // lam.shape[0], uniq % lam.shape[0], hits.astype(np.int64)


class ModelSampler:
    """Batch sampler of nu_n restricted to the window (a, b]."""

    def __init__(self, model: "PointProcessModel", a: float, b: float):
        self.model = model
        self.a, self.b = float(a), float(b)
        self.horizon = Horizon(self.a, self.b)
        self.c = model.limit_c
        seq, law = model.sequence, model.law
        self.ks = seq.window_indices(model.n, a, b) if b > a else np.empty(0, dtype=np.int64)
        zn = seq.z([model.n])[0]
        self.locations = np.asarray(seq.z(self.ks) / zn, dtype=float)
        self.lam, self.u = law.params(self.ks, seq)
        self.kind = law.sampled_as
        sure = ~np.isfinite(self.lam)
        if np.any(sure) and self.kind != "bernoulli":
            raise DomainError("geometric law with P(X=0) = 0 has no finite multiplicity")
        self.sure = np.flatnonzero(sure)

    def sample_batch(self, reps: int, rng: np.random.Generator) -> MeasureBatch:
        rep, idx, hits = _hit_batch(reps, self.lam, rng)
        if self.kind == "bernoulli":
            mult = np.ones(idx.shape[0], dtype=np.int64)
        elif self.kind == "poisson":
            mult = hits
        else:
            v = 1.0 - rng.random(idx.shape[0])
            extra = np.floor(np.log(v) / np.log1p(-(1.0 - self.u[idx])))
            mult = 1 + extra.astype(np.int64)
        if self.sure.size:
            rep = np.concatenate([rep, np.repeat(np.arange(reps, dtype=np.int64), self.sure.size)])
            idx = np.concatenate([idx, np.tile(self.sure, reps)])
            mult = np.concatenate([mult, np.ones(reps * self.sure.size, dtype=np.int64)])
            order = np.lexsort((idx, rep))
            rep, idx, mult = rep[order], idx[order], mult[order]
        return MeasureBatch.from_rep_ids(reps, rep, self.locations[idx], mult, self.horizon)

    def expected_count(self) -> float:
        _, _, mean = self.model.law.marginal_arrays(self.ks, self.model.sequence)
        return float(np.sum(mean))


@dataclass(frozen=True)
class PointProcessModel:
    sequence: SequenceSpec
    law: MultiplicityLaw
    n: int

    def __post_init__(self):
        if self.n < self.sequence.k0:
            raise ConfigError(f"n must be >= {self.sequence.k0} for {self.sequence.kind}")

    @property
    def limit_c(self) -> float:
        return self.law.c

    @property
    def z_n(self) -> float:
        return float(self.sequence.z([self.n])[0])

    def with_n(self, n: int) -> "PointProcessModel":
        return PointProcessModel(self.sequence, self.law, n)

    def window_indices(self, a: float, b: float) -> np.ndarray:
        return self.sequence.window_indices(self.n, a, b)

    def marginals(self, k: int) -> Marginals:
        return self.law.marginals(k, self.sequence)

    def sampler(self, a: float = 0.0, b: float = 1.0) -> ModelSampler:
        return ModelSampler(self, a, b)

    def sample_nu_n(self, window: tuple[float, float], rng) -> CountingMeasure:
        a, b = window
        if not a > 0:
            raise ValueError("window start must be positive")
        return self.sampler(a, b).sample_batch(1, rng)[0]

    def weighted_sums(self, reps: int, rng) -> np.ndarray:
        """Draws of W_n = (1/z_n) sum_{k <= n} z_k X_k."""
        return self.sampler(0.0, 1.0).sample_batch(reps, rng).sum_in_unit_ball(closed=True)

    def weighted_sum_sample(self, rng) -> float:
        return float(self.weighted_sums(1, rng)[0])

    def expected_weighted_sum(self) -> float:
        ks = self.window_indices(0.0, 1.0)
        z = self.sequence.z(ks)
        _, _, mean = self.law.marginal_arrays(ks, self.sequence)
        return float(np.sum(np.asarray(z / self.sequence.z([self.n])[0], dtype=float) * mean))


def coupled_weighted_sums(models: list[PointProcessModel], reps: int, rng) -> np.ndarray:
    """Draws of W_n for several models from common random numbers.

    Every model reads the same marked Poisson points, measured from the top of
    its window. That is, index k is hit by points at distance in
    ``[sum_{j>k} lam_j, sum_{j>=k} lam_j)``, and a geometric excess uses the mark of
    the first point hitting k. Each column has the exact law of its model;
    the columns are coupled, which sharpens comparisons across n.
    Returns an array of shape (reps, len(models)).
    """
    tables = []
    for model in models:
        smp = model.sampler(0.0, 1.0)
        lam = np.where(np.isfinite(smp.lam), smp.lam, 0.0)
        # distance-from-top cumulative sums, ascending, for the reversed index order
        tables.append((smp, np.cumsum(lam[::-1])))
    top = max(float(t[-1]) if t.size else 0.0 for _, t in tables)
    counts = rng.poisson(top, size=reps) if top > 0 else np.zeros(reps, dtype=np.int64)
    rep = np.repeat(np.arange(reps, dtype=np.int64), counts)
    dist = rng.random(rep.shape[0]) * top
    mark = 1.0 - rng.random(rep.shape[0])
    out = np.zeros((reps, len(models)))
    for j, (smp, cum) in enumerate(tables):
        size = smp.ks.shape[0]
        if size:
            live = dist < cum[-1]
            r, d, v = rep[live], dist[live], mark[live]
            idx = size - 1 - np.searchsorted(cum, d, side="right")
            key = r * size + idx
            uniq, first, hits = np.unique(key, return_index=True, return_counts=True)
            ids, idx = uniq // size, uniq % size
            if smp.kind == "bernoulli":
                mult = np.ones(idx.shape[0])
            elif smp.kind == "poisson":
                mult = hits.astype(float)
            else:
                mult = 1.0 + np.floor(np.log(v[first]) / np.log1p(-(1.0 - smp.u[idx])))
            out[:, j] = np.bincount(ids, weights=smp.locations[idx] * mult, minlength=reps)
            out[:, j] += float(np.sum(smp.locations[smp.sure]))
    return out


def marginals(model: PointProcessModel, k: int) -> Marginals:
    return model.marginals(k)


def sample_nu_n(model: PointProcessModel, window, rng) -> CountingMeasure:
    return model.sample_nu_n(window, rng)


def weighted_sum_sample(model: PointProcessModel, rng) -> float:
    return model.weighted_sum_sample(rng)


# --------------------------------------------------------------------------
# named models


def primes_geometric(n: int) -> PointProcessModel:
    return PointProcessModel(SequenceSpec("primes-log"), MultiplicityLaw("geometric", "prime"), n)


def primes_bernoulli(n: int) -> PointProcessModel:
    return PointProcessModel(SequenceSpec("primes-log"), MultiplicityLaw("bernoulli", "prime"), n)


def primes_poisson(n: int) -> PointProcessModel:
    return PointProcessModel(SequenceSpec("primes-log"), MultiplicityLaw("poisson", "prime"), n)


def records(n: int) -> PointProcessModel:
    return PointProcessModel(SequenceSpec("linear-k"), MultiplicityLaw("bernoulli", "records"), n)


def logk_geometric(n: int) -> PointProcessModel:
    return PointProcessModel(SequenceSpec("log-k"), MultiplicityLaw("geometric", "klogk"), n)


def theorem_ex(n: int, c: float = 1.0, sequence: str = "linear-k") -> PointProcessModel:
    return PointProcessModel(SequenceSpec(sequence), MultiplicityLaw("theorem-ex", "theorem-ex", c), n)


def sqrt_ratio(n: int, c: float = 1.0) -> PointProcessModel:
    return theorem_ex(n, c, "sqrt-ratio")


def model_from_config(cfg: dict) -> PointProcessModel:
    """Build a model from ``{"sequence": {...}, "law": {...}, "n": ...}``."""
    try:
        s, l = cfg["sequence"], cfg["law"]
        seq = SequenceSpec(s["kind"], tuple(s.get("values", ())))
        kind = l["kind"]
        rule = l.get("rule", "theorem-ex" if kind == "theorem-ex" else None)
        if rule is None:
            raise ConfigError(f"law {kind!r} needs a rule")
        law = MultiplicityLaw(kind, rule, float(l.get("c", 1.0)))
        return PointProcessModel(seq, law, int(cfg["n"]))
    except KeyError as exc:
        raise ConfigError(f"model config is missing {exc}") from None


def load_model(path) -> PointProcessModel:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return model_from_config(cfg)


# --------------------------------------------------------------------------
# exact oracles


def records_exact_pmf(n: int) -> dict:
    """Exact law of sum_{k<=n} k X_k with independent X_k ~ Ber(1/k).

    Rational weights up to n = 20, long double up to n = 64.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 64:
        raise BudgetError("exact convolution is limited to n <= 64")
    if n <= 20:
        pmf = {0: Fraction(1)}
        for k in range(1, n + 1):
            p = Fraction(1, k)
            nxt: dict = {}
            for s, w in pmf.items():
                if p != 1:
                    nxt[s] = nxt.get(s, 0) + w * (1 - p)
                nxt[s + k] = nxt.get(s + k, 0) + w * p
            pmf = nxt
        return dict(sorted((s, w) for s, w in pmf.items() if w))
    w = np.zeros(n * (n + 1) // 2 + 1, dtype=LD)
    w[0] = 1
    for k in range(1, n + 1):
        p = LD(1) / k
        shifted = np.zeros_like(w)
        shifted[k:] = w[:-k]
        w = w * (1 - p) + shifted * p
    return {int(s): w[s] for s in np.flatnonzero(w > 0)}


def records_permutation_pmf(n: int) -> dict:
    """Law of the sum of record positions over all n! permutations."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 8:
        raise BudgetError("permutation enumeration is limited to n <= 8")
    tally: Counter = Counter()
    for perm in itertools.permutations(range(n)):
        top, total = -1, 0
        for pos, v in enumerate(perm, start=1):
            if v > top:
                top, total = v, total + pos
        tally[total] += 1
    size = math.factorial(n)
    return {s: Fraction(c, size) for s, c in sorted(tally.items())}


def total_variation(p: dict, q: dict):
    """Half the l1 distance; exact when both pmfs hold rationals."""
    exact = all(isinstance(v, (int, Fraction)) for v in (*p.values(), *q.values()))
    zero = Fraction(0) if exact else 0.0
    conv = (lambda v: v) if exact else float
    return sum(abs(conv(p.get(k, zero)) - conv(q.get(k, zero))) for k in set(p) | set(q)) / 2


def smooth_reciprocal_pmf(n: int, m: int) -> Fraction:
    """P(prod_{k<=n} p_k^{X_k} = m) with X_k ~ Geom(1 - 1/p_k), for p_n <= 7."""
    small = (2, 3, 5, 7)
    if not 1 <= n <= len(small):
        raise BudgetError("only p_n <= 7 is supported")
    if m < 1:
        raise DomainError("m must be a positive integer")
    prob = Fraction(1)
    rest = m
    for p in small[:n]:
        e = 0
        while rest % p == 0:
            rest //= p
            e += 1
        prob *= Fraction(1, p) ** e * (1 - Fraction(1, p))
    if rest != 1:
        raise DomainError(f"{m} has a prime factor larger than {small[n - 1]}")
    return prob


def smooth_normaliser(n: int) -> Fraction:
    """sum of 1/m over p_n-smooth m, i.e. prod (1 - 1/p)^-1."""
    out = Fraction(1)
    for p in (2, 3, 5, 7)[:n]:
        out /= 1 - Fraction(1, p)
    return out

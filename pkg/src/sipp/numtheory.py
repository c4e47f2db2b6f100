"""Prime tables and finite Mertens-type window sums and products.

Prime windows are the half-open ranges ``p_n**a < p <= p_n**b``. Membership is
decided by comparing ``log p`` with ``a * log p_n`` in ``np.longdouble`` so
that the rule is fixed and reproducible at the boundary.
"""
from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import RangeError, ResourceError

#: Largest sieve limit accepted without an explicit override (about 0.4 GB of primes).
DEFAULT_MAX_LIMIT = int(float(os.environ.get("SIPP_SIEVE_LIMIT", "1e9")))
SEGMENT_ODDS = 1 << 21


@dataclass(frozen=True)
class PrimeTable:
    """All primes up to ``limit`` in increasing order."""

    limit: int
    primes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.primes.setflags(write=False)

    @property
    def count(self) -> int:
        return int(self.primes.shape[0])

    def __len__(self) -> int:
        return self.count

    def log_primes(self) -> np.ndarray:
        return np.log(self.primes.astype(np.longdouble))

    def count_log_le(self, x) -> int:
        """Number of primes with log p <= x, compared in longdouble.

        Locates the cut on the integer table first, then settles the few
        primes near it by their longdouble logs, so no table-sized log array
        is built.
        """
        x = np.longdouble(x)
        pr = self.primes
        approx = float(np.exp(x)) if x < 700 else math.inf
        k = int(np.searchsorted(pr, approx, side="right")) if math.isfinite(approx) else pr.shape[0]
        while k > 0 and np.log(np.longdouble(pr[k - 1])) > x:
            k -= 1
        while k < pr.shape[0] and np.log(np.longdouble(pr[k])) <= x:
            k += 1
        return k

    def nth(self, k: int) -> int:
        if k < 1:
            raise ValueError("prime index starts at 1")
        if k > self.count:
            raise RangeError(f"prime #{k} lies beyond the sieve limit {self.limit}")
        return int(self.primes[k - 1])


def _simple_sieve(limit: int) -> np.ndarray:
    if limit < 2:
        return np.empty(0, dtype=np.int64)
    flags = np.ones(limit + 1, dtype=bool)
    flags[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if flags[p]:
            flags[p * p::p] = False
    return np.flatnonzero(flags).astype(np.int64)


def sieve_primes(limit: int, max_limit: int | None = None, backend: str | None = None) -> PrimeTable:
    """Segmented odd-only sieve of Eratosthenes."""
    if limit < 0:
        raise ValueError("limit must be non-negative")
    max_limit = DEFAULT_MAX_LIMIT if max_limit is None else max_limit
    if limit > max_limit:
        raise ResourceError(f"sieve limit {limit} exceeds the memory budget {max_limit}")
    if limit < 2:
        return PrimeTable(limit, np.empty(0, dtype=np.int64))
    segment = kernels.get("sieve_segment", backend)
    base = _simple_sieve(math.isqrt(limit) + 1)
    parts = [np.array([2], dtype=np.int64)]
    low = 3
    while low <= limit:
        count = min(SEGMENT_ODDS, (limit - low) // 2 + 1)
        mask = segment(low, count, base)
        parts.append(low + 2 * np.flatnonzero(mask).astype(np.int64))
        low += 2 * count
    return PrimeTable(limit, np.concatenate(parts))


def prime_count_upper(k: int) -> int:
    """An integer >= p_k (Rosser-Schoenfeld style bound)."""
    if k < 6:
        return 13
    lk = math.log(k)
    return int(k * (lk + math.log(lk))) + 3


class _Cache:
    """Process-wide prime table that grows geometrically on demand."""

    def __init__(self):
        self._table = sieve_primes(1 << 16)
        self._lock = threading.Lock()

    def upto(self, limit: int) -> PrimeTable:
        with self._lock:
            if self._table.limit < limit:
                target = max(limit, 2 * self._table.limit)
                target = min(target, max(limit, DEFAULT_MAX_LIMIT))
                self._table = sieve_primes(target)
            return self._table

    def with_count(self, k: int) -> PrimeTable:
        return self.upto(prime_count_upper(k))


_cache = _Cache()


def primes_upto(limit: int) -> PrimeTable:
    """Shared cached table covering at least ``limit``."""
    return _cache.upto(limit)


def primes_count(k: int) -> PrimeTable:
    """Shared cached table holding at least the first ``k`` primes."""
    return _cache.with_count(k)


def nth_prime(k: int, table: PrimeTable | None = None) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    table = table if table is not None else primes_count(k)
    return table.nth(k)


def _window_primes(n: int, a: float, b: float, table: PrimeTable | None) -> np.ndarray:
    if not 0 < a:
        raise ValueError("window start a must be positive")
    if b < a:
        raise ValueError("window requires a <= b")
    if table is None:
        pn = nth_prime(n)
        hi = int(math.floor(math.exp(b * math.log(pn)) * (1 + 1e-12))) + 1
        table = primes_upto(hi)
    else:
        pn = table.nth(n)
    log_pn = np.log(np.longdouble(pn))
    lo_cut = np.longdouble(a) * log_pn
    hi_cut = np.longdouble(b) * log_pn
    if hi_cut > np.log(np.longdouble(table.limit)):
        # a prime in (limit, p_n**b] would be missed
        raise RangeError(f"window upper end p_n^{b} exceeds the sieve limit {table.limit}")
    i0 = table.count_log_le(lo_cut)
    i1 = table.count_log_le(hi_cut)
    return table.primes[i0:i1]


def mertens_window_product(n: int, a: float, b: float, table: PrimeTable | None = None) -> float:
    """Product of (1 - 1/p) over primes p_n**a < p <= p_n**b."""
    p = _window_primes(n, a, b, table).astype(np.float64)
    return float(np.exp(np.sum(np.log1p(-1.0 / p))))


def prime_reciprocal_window_sum(n: int, a: float, b: float, table: PrimeTable | None = None) -> float:
    """Sum of 1/p over primes p_n**a < p <= p_n**b."""
    p = _window_primes(n, a, b, table).astype(np.float64)
    return float(np.sum(1.0 / p))


def log_weighted_prime_sum(x: float, table: PrimeTable | None = None) -> float:
    """Sum of log(p)/p over primes p <= x."""
    if x < 2:
        raise ValueError("x must be >= 2")
    table = table if table is not None else primes_upto(int(x))
    if table.limit < math.floor(x):
        raise RangeError(f"x={x} exceeds the sieve limit {table.limit}")
    p = table.primes[: int(np.searchsorted(table.primes, math.floor(x), side="right"))]
    p = p.astype(np.float64)
    return float(np.sum(np.log(p) / p))

"""Hot inner loops, each in a numba and a pure-numpy flavour.

Both flavours consume identical inputs and implement the same arithmetic, so
they agree to rounding. ``BACKEND`` (from ``SIPP_BACKEND``) picks the default
binding; ``get(name, backend)`` fetches a specific one for tests and benchmarks.
"""
from __future__ import annotations

import math

import numpy as np

from ._backend import BACKEND, HAVE_NUMBA, njit

# --------------------------------------------------------------------------
# odd-only segmented sieve: mark composites among low, low+2, ..., < high


def sieve_segment_numpy(low: int, count: int, base: np.ndarray) -> np.ndarray:
    mask = np.ones(count, dtype=np.bool_)
    high = low + 2 * count
    for p in base:
        p = int(p)
        if p == 2:
            continue
        p2 = p * p
        if p2 >= high:
            break
        start = max(p2, ((low + p - 1) // p) * p)
        if start % 2 == 0:
            start += p
        if start >= high:
            continue
        mask[(start - low) // 2::p] = False
    return mask


@njit
def _sieve_segment_loop(low, count, base):
    mask = np.ones(count, dtype=np.bool_)
    high = low + 2 * count
    for t in range(base.shape[0]):
        p = base[t]
        if p == 2:
            continue
        p2 = p * p
        if p2 >= high:
            break
        start = ((low + p - 1) // p) * p
        if start < p2:
            start = p2
        if start % 2 == 0:
            start += p
        j = (start - low) // 2
        while j < count:
            mask[j] = False
            j += p
    return mask


def sieve_segment_numba(low: int, count: int, base: np.ndarray) -> np.ndarray:
    return _sieve_segment_loop(np.int64(low), np.int64(count), base.astype(np.int64))


# --------------------------------------------------------------------------
# radial points of the scale-invariant process below 1: s_j = exp(-cum_j),
# cum_j = log_s + (E_1 + ... + E_j) / c, kept while cum_j <= log_floor


def radial_block_numpy(expo: np.ndarray, log_s: np.ndarray, inv_c: float, log_floor: float):
    steps = np.empty((expo.shape[0], expo.shape[1] + 1))
    steps[:, 0] = log_s
    np.multiply(expo, inv_c, out=steps[:, 1:])
    cum = np.cumsum(steps, axis=1)[:, 1:]
    keep = cum <= log_floor
    points = np.where(keep, np.exp(-cum), 0.0)
    done = ~keep[:, -1]
    return points, cum[:, -1].copy(), done


@njit
def _radial_block_loop(expo, log_s, inv_c, log_floor, points, log_out, done):
    rows, cols = expo.shape
    for r in range(rows):
        cum = log_s[r]
        finished = False
        for j in range(cols):
            cum += expo[r, j] * inv_c
            if not finished and cum <= log_floor:
                points[r, j] = math.exp(-cum)
            else:
                finished = True
        log_out[r] = cum
        done[r] = finished


def radial_block_numba(expo: np.ndarray, log_s: np.ndarray, inv_c: float, log_floor: float):
    points = np.zeros(expo.shape)
    log_out = np.empty(expo.shape[0])
    done = np.zeros(expo.shape[0], dtype=np.bool_)
    _radial_block_loop(np.ascontiguousarray(expo, dtype=np.float64),
                       np.ascontiguousarray(log_s, dtype=np.float64),
                       float(inv_c), float(log_floor), points, log_out, done)
    return points, log_out, done


# --------------------------------------------------------------------------
# delay-equation march for x f(x) = c * (mass of f over (x-1, x]).
# Grid x_i = i/m. On entry f[0..m] and window[m] are set; dB_first[k] is the
# exact mass of f over (k h, (k+1) h] for k < m. Trapezoid rule throughout.


@njit
def _delay_march_loop(f, window, m, c, dB_first):
    h = 1.0 / m
    n = f.shape[0]
    for i in range(m + 1, n):
        x = i * h
        if i <= 2 * m:
            db = dB_first[i - m - 1]
        else:
            db = 0.5 * h * (f[i - m - 1] + f[i - m])
        w = (window[i - 1] + 0.5 * h * f[i - 1] - db) / (1.0 - 0.5 * h * c / x)
        window[i] = w
        f[i] = c * w / x


def delay_march_numba(f, window, m, c, dB_first):
    _delay_march_loop(f, window, np.int64(m), float(c), np.ascontiguousarray(dB_first))


def delay_march_numpy(f, window, m, c, dB_first):
    # the recurrence is linear: window_i = A_i window_{i-1} + C_i, solved per unit block
    h = 1.0 / m
    n = f.shape[0]
    start = m + 1
    while start < n:
        stop = min(start + m, n)
        idx = np.arange(start, stop)
        x = idx * h
        x_prev = (idx - 1) * h
        if start <= 2 * m:
            db = dB_first[idx - m - 1]
        else:
            db = 0.5 * h * (f[idx - m - 1] + f[idx - m])
        denom = 1.0 - 0.5 * h * c / x
        a = (1.0 + 0.5 * h * c / x_prev) / denom
        b = -db / denom
        p = np.cumprod(a)
        w = p * (window[start - 1] + np.cumsum(b / p))
        window[start:stop] = w
        f[start:stop] = c * w / x
        start = stop


_KERNELS = {
    "sieve_segment": {"numpy": sieve_segment_numpy, "numba": sieve_segment_numba},
    "radial_block": {"numpy": radial_block_numpy, "numba": radial_block_numba},
    "delay_march": {"numpy": delay_march_numpy, "numba": delay_march_numba},
}


def get(name: str, backend: str | None = None):
    backend = backend or BACKEND
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return _KERNELS[name][backend]


def names() -> list[str]:
    return sorted(_KERNELS)


sieve_segment = get("sieve_segment")
radial_block = get("radial_block")
delay_march = get("delay_march")

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sipp import kernels
from sipp.numtheory import _simple_sieve


def test_registry():
    assert kernels.names() == ["delay_march", "radial_block", "sieve_segment"]
    for name in kernels.names():
        assert callable(kernels.get(name, "numpy")) and callable(kernels.get(name, "numba"))


@given(st.integers(0, 10**6).map(lambda x: 2 * x + 1), st.integers(1, 5000))
def test_sieve_segment_backends(low, count):
    base = _simple_sieve(math.isqrt(low + 2 * count) + 1)
    a = kernels.get("sieve_segment", "numpy")(low, count, base)
    b = kernels.get("sieve_segment", "numba")(low, count, base)
    assert np.array_equal(a, b)
    odds = low + 2 * np.arange(count)
    primes = set(_simple_sieve(low + 2 * count).tolist())
    assert np.array_equal(a[odds > 1], np.array([v in primes for v in odds[odds > 1]], dtype=bool))


@given(st.integers(0, 2**32), st.floats(0.2, 5.0), st.floats(0.5, 15.0))
def test_radial_block_backends(seed, c, log_floor):
    rng = np.random.default_rng(seed)
    expo = -np.log1p(-rng.random((64, 8)))
    log_s = rng.uniform(0, log_floor, 64)
    outs = [kernels.get("radial_block", b)(expo, log_s.copy(), 1 / c, log_floor) for b in ("numpy", "numba")]
    for x, y in zip(*outs):
        assert np.allclose(x, y, rtol=1e-12, atol=0)
    pts, new_log_s, done = outs[0]
    cum = log_s[:, None] + np.cumsum(expo, axis=1) / c
    assert np.allclose(pts, np.where(cum <= log_floor, np.exp(-cum), 0.0), rtol=1e-12, atol=0)
    assert np.array_equal(done, cum[:, -1] > log_floor)
    assert np.allclose(new_log_s[~done], cum[~done, -1])


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_delay_march_backends(c):
    m = 1000
    n = 6 * m
    f = np.empty(n + 1)
    x = np.arange(n + 1) / m
    with np.errstate(divide="ignore"):
        f[: m + 1] = x[: m + 1] ** (c - 1)
    window = np.zeros(n + 1)
    window[m] = 1 / c
    k = np.arange(m + 1, dtype=float)
    db = np.diff(k ** c) * (1 / m) ** c / c
    fa, wa, fb, wb = f.copy(), window.copy(), f.copy(), window.copy()
    kernels.get("delay_march", "numpy")(fa, wa, m, c, db)
    kernels.get("delay_march", "numba")(fb, wb, m, c, db)
    assert np.allclose(fa, fb, rtol=0, atol=1e-12 * np.max(np.abs(fa[m:])))
    assert np.allclose(wa, wb, rtol=0, atol=1e-12 * wa[m])

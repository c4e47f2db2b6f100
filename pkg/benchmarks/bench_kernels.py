"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once per backend before timing, so numba compilation is
excluded. Outputs of the two backends are compared as a sanity check.
"""
import argparse
import math
import time

import numpy as np

from sipp import kernels
from sipp._backend import HAVE_NUMBA
from sipp.numtheory import primes_upto


def sieve_case():
    base = primes_upto(int(math.isqrt(3 * 10**7)) + 1).primes
    return (10**7, 10**7, base)


def radial_case():
    rng = np.random.default_rng(0)
    expo = -np.log1p(-rng.random((65536, 32)))
    return (expo, np.zeros(65536), 1.0, math.log(1e6))


def march_case():
    # same inputs the reference engine builds for c = 1, h = 1e-4 on [0, 12]
    m, c = 10_000, 1.0
    n = 12 * m
    f = np.empty(n + 1)
    f[: m + 1] = 1.0
    window = np.zeros(n + 1)
    window[m] = 1.0
    db = np.full(m, 1.0 / m)
    return (f, window, m, c, db)


CASES = {"sieve_segment": sieve_case, "radial_block": radial_case, "delay_march": march_case}


def _copy(args):
    return tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)


def _result(name, args, out):
    # delay_march works in place on its first two arguments
    return args[0] if name == "delay_march" else (out[0] if isinstance(out, tuple) else out)


def bench(name: str, repeat: int) -> dict:
    setup = CASES[name]()
    timings, results = {}, {}
    for backend in ("numpy", "numba") if HAVE_NUMBA else ("numpy",):
        fn = kernels.get(name, backend)
        fn(*_copy(setup))
        best = math.inf
        for _ in range(repeat):
            args = _copy(setup)
            t0 = time.perf_counter()
            out = fn(*args)
            best = min(best, time.perf_counter() - t0)
        timings[backend] = best
        results[backend] = _result(name, args, out)
    # the march tail is round-off below ~1e-13 of the peak in either backend
    scale = float(np.max(np.abs(results["numpy"]))) if name == "delay_march" else 0.0
    agree = len(results) < 2 or np.allclose(results["numpy"], results["numba"], rtol=1e-12, atol=1e-12 * scale)
    return {"kernel": name, **timings, "agree": agree}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--kernel", choices=sorted(CASES), action="append")
    args = ap.parse_args()
    print(f"{'kernel':<15}{'numpy s':>12}{'numba s':>12}{'speedup':>10}  agree")
    for name in args.kernel or kernels.names():
        row = bench(name, args.repeat)
        nb = row.get("numba", math.nan)
        print(f"{name:<15}{row['numpy']:>12.4f}{nb:>12.4f}{row['numpy'] / nb:>10.1f}  {row['agree']}")


if __name__ == "__main__":
    main()

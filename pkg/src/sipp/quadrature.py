"""Adaptive Simpson quadrature for smooth scalar integrands."""
from __future__ import annotations

import math

from .errors import NumericError


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 60,
                     max_evals: int = 200_000) -> float:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Uses the usual Richardson-corrected Simpson refinement with an explicit
    stack. Integrable endpoint singularities must be removed by the caller;
    a divergent integrand exhausts ``max_evals`` and raises NumericError.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total, evals = 0.0, 3
    while stack:
        lo, hi, flo, fmid, fhi, s, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        evals += 2
        if evals > max_evals:
            raise NumericError(f"adaptive Simpson exceeded {max_evals} evaluations on [{a}, {b}]")
        left = (mid - lo) * (flo + 4.0 * flm + fmid) / 6.0
        right = (hi - mid) * (fmid + 4.0 * frm + fhi) / 6.0
        delta = left + right - s
        if abs(delta) <= 15.0 * eps or hi - lo < 1e-15 * max(1.0, abs(hi)):
            total += left + right + delta / 15.0
            continue
        if depth >= max_depth:
            raise NumericError(f"adaptive Simpson did not converge on [{lo}, {hi}]")
        if not math.isfinite(delta):
            raise NumericError(f"non-finite integrand on [{lo}, {hi}]")
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
    return sign * total

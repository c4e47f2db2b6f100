"""Kernel backend selection.

Set ``SIPP_BACKEND=numpy`` (or ``SIPP_DISABLE_NUMBA=1``) before import to run
every hot loop through its vectorised numpy fallback instead of numba.
"""
import os

_requested = os.environ.get("SIPP_BACKEND", "").strip().lower()
_disabled = os.environ.get("SIPP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

if _requested not in {"", "numba", "numpy"}:
    raise ImportError(f"SIPP_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numpy" if (_disabled or _requested == "numpy" or not HAVE_NUMBA) else "numba"


def njit(*args, **kwargs):
    """``numba.njit`` with caching and GIL release, or a no-op without numba."""
    if not HAVE_NUMBA:
        def deco(fn):
            return fn
        return deco(args[0]) if args and callable(args[0]) else deco
    import numba

    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)

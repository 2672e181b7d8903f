"""Optional numba JIT.

Set ``STRAINSURF_NUMBA=0`` in the environment (before import) to run every
kernel through its pure-numpy implementation instead.
"""
import os

_flag = os.environ.get("STRAINSURF_NUMBA", "1").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and _flag not in ("0", "false", "no", "off")


def njit(fn):
    """``numba.njit(cache=True)`` when available, otherwise ``fn`` unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn

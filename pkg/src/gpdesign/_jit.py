"""Conditional numba compilation for the hot numeric kernels.

Every kernel in this package is plain Python over numpy arrays and scalars.
When numba is available (and not disabled), the kernels are compiled with
``@njit``; otherwise the exact same functions run uncompiled.  Because numba
reproduces numpy's ``Generator`` bit streams, both paths draw identical
random numbers, so the fallback differs only in speed and in last-bit
rounding of transcendentals.

Set ``GPDESIGN_NO_NUMBA=1`` to force the pure-Python path.
"""

import os

NUMBA_ENABLED = False

if os.environ.get("GPDESIGN_NO_NUMBA", "").strip() not in ("1", "true", "yes"):
    try:
        from numba import njit as _numba_njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        NUMBA_ENABLED = False


def kernel(func):
    """Compile ``func`` with numba when enabled, else return it unchanged."""
    if NUMBA_ENABLED:
        return _numba_njit(cache=True)(func)
    return func

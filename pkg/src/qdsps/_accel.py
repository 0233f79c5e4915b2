"""Optional numba acceleration.

Setting ``QDSPS_DISABLE_NUMBA=1`` in the environment runs every kernel as
plain Python over numpy arrays.  Results agree with the compiled path to
round-off; the fallback exists for debugging and for platforms without numba.
"""
import os

_flag = os.environ.get("QDSPS_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAS_NUMBA = numba is not None and not NUMBA_DISABLED


def jit(func):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    if HAS_NUMBA:
        return numba.njit(cache=True)(func)
    return func

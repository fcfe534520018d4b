"""Numba availability switch.

Set ``TTFS_DISABLE_NUMBA=1`` to force the pure-numpy code paths.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_DISABLED = os.environ.get("TTFS_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")
USE_NUMBA = NUMBA_AVAILABLE and not NUMBA_DISABLED


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is importable, else return it unchanged."""
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)

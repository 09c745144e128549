"""Numba switch.

Set ``IRSNOMA_NUMBA=0`` before import to force the pure-numpy kernels.
"""
import os

_flag = os.environ.get("IRSNOMA_NUMBA", "1").strip().lower()
_wanted = _flag not in ("0", "false", "no", "off")

try:
    import numba  # noqa: F401
    from numba import njit as _numba_njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = _wanted and HAVE_NUMBA


def njit(func):
    """Compile ``func`` in nopython mode, cached on disk."""
    if not HAVE_NUMBA:  # pragma: no cover
        return func
    return _numba_njit(cache=True)(func)

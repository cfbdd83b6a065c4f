"""Numba switch for the hot kernels.

Set ``MPCC_OPT_DISABLE_JIT=1`` to run every kernel through its pure
numpy/scipy counterpart instead of the compiled one.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}

DISABLE_JIT = os.environ.get("MPCC_OPT_DISABLE_JIT", "0").strip().lower() not in _FALSY

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _njit = None
    DISABLE_JIT = True

USE_NUMBA = not DISABLE_JIT


def njit(f):
    """Compile ``f`` with numba (cached, no fastmath) unless jit is disabled."""
    if _njit is None:
        return f
    return _njit(cache=True, fastmath=False)(f)

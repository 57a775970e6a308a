"""Numba switch for the numeric kernels.

Kernels are written once in numba-compatible numpy. With numba available
they are compiled by ``njit``; setting ``JSRBOUND_DISABLE_NUMBA=1`` (or a
missing numba install) leaves them as plain Python over numpy arrays.
The flag is read once at import time.
"""
import os

_DISABLED = os.environ.get("JSRBOUND_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    opts = {"cache": True}
    opts.update(kwargs)

    def wrap(f):
        if HAS_NUMBA:
            return numba.njit(**opts)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap


def backend():
    return "numba" if HAS_NUMBA else "numpy"

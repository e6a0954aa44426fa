"""Numba switch.

Hot kernels are written twice: an ``@njit`` loop version and a vectorised
numpy version.  Set ``ROUTESCALE_DISABLE_NUMBA=1`` to force the numpy path
(and to run the solver kernels as plain Python).
"""
import os

_FLAG = "ROUTESCALE_DISABLE_NUMBA"


def numba_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

USE_NUMBA = _numba is not None and not numba_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is active, identity otherwise."""
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        fn = args[0]
        return _numba.njit(cache=True)(fn) if USE_NUMBA else fn

    def wrap(fn):
        if not USE_NUMBA:
            return fn
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)(fn)

    return wrap


def backend():
    return "numba" if USE_NUMBA else "numpy"

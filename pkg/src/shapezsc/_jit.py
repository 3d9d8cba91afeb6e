"""Optional numba acceleration.

Set ``SHAPEZSC_DISABLE_NUMBA=1`` to run every kernel as plain Python over
numpy arrays. The compiled and interpreted paths share one source, so the
fallback is always behaviourally identical (see ``tests/test_kernels.py``).
"""
import os

DISABLED = os.environ.get("SHAPEZSC_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False
    _njit = None


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    kwargs.setdefault("cache", True)
    if HAS_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]):
        return args[0]
    return lambda fn: fn


def python_impl(fn):
    """Return the interpreted implementation behind a (possibly) jitted kernel."""
    return getattr(fn, "py_func", fn)

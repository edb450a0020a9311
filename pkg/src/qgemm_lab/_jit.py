"""Optional numba acceleration.

Set ``QGEMM_LAB_NO_JIT=1`` to run every hot kernel as plain Python over
numpy arrays. The decorated functions keep the uncompiled version on
``.py_func`` either way, so both paths can be exercised side by side.
"""
import os

NO_JIT = os.environ.get("QGEMM_LAB_NO_JIT", "0").lower() not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None and not NO_JIT


def njit(fn):
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    fn.py_func = fn
    return fn

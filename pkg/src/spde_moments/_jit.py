"""Backend selection for the hot kernels.

Every kernel in :mod:`spde_moments.kernels` exists twice: an explicit-loop
version compiled with ``numba.njit`` and a vectorized numpy version.  The
loop versions are used when numba imports and ``SPDE_MOMENTS_DISABLE_NUMBA``
is unset (or ``0``).  The flag is read once, at import time.
"""

from __future__ import annotations

import os

_FLAG = "SPDE_MOMENTS_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_ENABLED = numba is not None and os.environ.get(_FLAG, "0") in ("", "0")


def njit(func):
    """Compile ``func`` in nopython mode, releasing the GIL.

    The undecorated function is kept on ``.py_func`` either way so that the
    benchmark can time the interpreted loop if it wants to.
    """
    if numba is None:
        func.py_func = func
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"

"""Optional numba acceleration.

Set ``BUSEMS_DISABLE_JIT=1`` to force the pure-numpy kernels even when numba
is importable.  The flag is read once at import time.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("BUSEMS_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        # bare @njit and @njit(...) both supported
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"

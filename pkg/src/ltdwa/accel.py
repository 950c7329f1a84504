"""Backend selection for the hot numeric kernels.

Set LTDWA_NO_NUMBA=1 to force the pure-numpy fallback path. The choice is
made once at import time; ``backend_name()`` reports which path is active.
"""

import os

_DISABLE = os.environ.get("LTDWA_NO_NUMBA", "0").lower() in ("1", "true", "yes")

if not _DISABLE:
    try:
        from numba import njit  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):  # noqa: F811
        """No-op decorator standing in for numba.njit."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"

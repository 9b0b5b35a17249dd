"""numba switch.

Set ``INVCOMM_NUMBA=0`` to force the pure-numpy kernels (also used when numba
is not importable). The flag is read once at import time.
"""
import os

_flag = os.environ.get("INVCOMM_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "no", "off")

try:
    import numba  # noqa: F401
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_REQUESTED and NUMBA_AVAILABLE


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if NUMBA_AVAILABLE:
        from numba import njit as _njit
        return _njit(*args, cache=True, **kwargs)

    def wrap(fn):
        return fn
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap

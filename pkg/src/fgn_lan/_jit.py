"""Numba switch.

Set ``FGN_LAN_NUMBA=0`` to run every hot kernel through its pure-numpy
fallback.  The flag is read once at import time.
"""
import os

_flag = os.environ.get("FGN_LAN_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _requested


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching, or a no-op when numba is absent."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)

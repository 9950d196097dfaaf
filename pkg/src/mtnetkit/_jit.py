"""numba switch.

Set ``MTNETKIT_DISABLE_JIT=1`` to force the pure-numpy kernels even when
numba is installed.
"""
import os

try:
    import numba as nb
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    nb = None
    HAVE_NUMBA = False

JIT_DISABLED = os.environ.get("MTNETKIT_DISABLE_JIT", "0").lower() in ("1", "true", "yes")
USE_NUMBA = HAVE_NUMBA and not JIT_DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if HAVE_NUMBA:
        return nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def backend_name():
    return "numba" if USE_NUMBA else "numpy"

"""Optional numba acceleration.

Kernels are written in the numpy subset numba understands. When numba is
importable and ``REPDYN_DISABLE_NUMBA`` is unset (or ``0``), they are
compiled with ``njit``; otherwise the identical source runs as plain numpy.
"""

import os


def _noop_jit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


def _have_numba():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


HAVE_NUMBA = _have_numba()
DISABLED = os.environ.get("REPDYN_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
USE_NUMBA = HAVE_NUMBA and not DISABLED

if USE_NUMBA:
    from numba import njit
else:
    njit = _noop_jit


def backend_name():
    return "numba" if USE_NUMBA else "numpy"

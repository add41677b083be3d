"""Optional numba acceleration.

Set ``STLINEAR_NO_NUMBA=1`` to force the pure-numpy code paths even when
numba is importable.  The flag is read once at import time.
"""

import os


def _noop_jit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


# The TBB layer probes an often-outdated system library; pick a portable one.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")


def _have_numba():
    try:
        import numba  # noqa: F401

        return True
    except ImportError:
        return False


def _disabled():
    return os.environ.get("STLINEAR_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


HAVE_NUMBA = _have_numba()
USE_NUMBA = HAVE_NUMBA and not _disabled()

if HAVE_NUMBA:
    from numba import njit, prange
else:
    njit = _noop_jit
    prange = range


def set_threads(n):
    """Cap numba worker threads; a no-op without numba."""
    if HAVE_NUMBA and n:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))

"""Optional numba acceleration for the hot kernels.

Set RFOAM_NO_NUMBA=1 to run the pure numpy/Python fallback path instead of
compiling. Jitted functions keep the interpreted original on ``.py_func``,
which is what benchmarks/bench_kernels.py uses to compare both paths.
"""

import os

USE_NUMBA = os.environ.get("RFOAM_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        import numba
        from numba import njit, prange
    except ImportError:
        USE_NUMBA = False

if not USE_NUMBA:
    numba = None
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def maybe_njit(*args, **kwargs):
    """njit with shared defaults; identity decorator on the fallback path."""
    if not USE_NUMBA:
        return njit(*args, **kwargs)
    kwargs.setdefault("cache", True)
    kwargs.setdefault("fastmath", False)
    return njit(*args, **kwargs)


def set_worker_threads(n: int) -> int:
    """Cap numba's thread pool; returns the effective count."""
    if not USE_NUMBA:
        return 1
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def default_workers() -> int:
    env = os.environ.get("RFOAM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)

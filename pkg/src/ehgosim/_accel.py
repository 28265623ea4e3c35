"""Numba acceleration switch for the hot numerical kernels.

All kernels in :mod:`ehgosim.kernels` are written as plain numpy/scalar
Python and compiled with ``numba.njit`` by default. Setting the environment
variable ``EHGO_SIM_NUMBA=0`` (or ``false``/``off``/``no``) before import
selects the pure-numpy fallback: the identical source runs uncompiled.
Both paths perform the same floating-point operations in the same order.

``benchmarks/backend_bench.py`` compares the two paths on the closed-loop
simulation step.
"""

import os


def _env_disabled() -> bool:
    value = os.environ.get("EHGO_SIM_NUMBA", "1").strip().lower()
    return value in ("0", "false", "off", "no")


NUMBA_ENABLED = not _env_disabled()

if NUMBA_ENABLED:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


def maybe_jit(func):
    """Compile ``func`` with njit unless the fallback flag is set."""
    if NUMBA_ENABLED:
        return _njit(cache=True, nogil=True, fastmath=False)(func)
    return func

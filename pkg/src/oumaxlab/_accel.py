"""Backend selection for the hot kernels.

Every kernel module ships two implementations: a scalar loop compiled with
numba, and a vectorized numpy path.  The numba path is used when numba is
importable and ``OUMAXLAB_DISABLE_NUMBA`` is unset (or ``0``).  Both paths
consume the same random streams, so results agree up to libm rounding.
"""

from __future__ import annotations

import os
import warnings

_FALSY = {"", "0", "false", "no", "off"}


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() not in _FALSY


# numba probes an optional TBB threading layer and warns when the system copy
# is too old; the workqueue/omp layers are used instead, so the warning is noise.
warnings.filterwarnings("ignore", message="The TBB threading layer")

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


USE_NUMBA = HAVE_NUMBA and not _flag("OUMAXLAB_DISABLE_NUMBA")
BACKEND = "numba" if USE_NUMBA else "numpy"


def set_workers(n: int | None = None) -> int:
    """Set the numba thread count (``OUMAXLAB_WORKERS`` when ``n`` is None).

    Returns the number of workers in effect.  A no-op on the numpy backend.
    """
    if n is None:
        raw = os.environ.get("OUMAXLAB_WORKERS", "").strip()
        n = int(raw) if raw else None
    if not USE_NUMBA:
        return 1
    if n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    return numba.get_num_threads()


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl

"""Backend selection for the numeric kernels.

Two implementations of every hot loop ship with the package:

* ``numba``: the loop kernels in :mod:`qaoi._kernels` are compiled with
  ``numba.njit`` (the default, and much faster),
* ``numpy``: the solver falls back to vectorized array sweeps
  (:mod:`qaoi._vectorized`) and the simulator to a plain-Python loop
  (:mod:`qaoi._sim_fallback`).

The backend is chosen once, at import time, from the ``QAOI_BACKEND``
environment variable (``"numba"`` or ``"numpy"``).  When numba is requested
but not importable the package degrades to the numpy path with a warning
instead of failing.  Both backends produce the same results; simulation
trajectories are bit-identical because both consume the same pseudo-random
stream in the same order.
"""

from __future__ import annotations

import os
import warnings

_ENV_VAR = "QAOI_BACKEND"
_requested = os.environ.get(_ENV_VAR, "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise RuntimeError(
        f"{_ENV_VAR} must be 'numba' or 'numpy', got {_requested!r}"
    )

NUMBA_ENABLED = _requested == "numba"
if NUMBA_ENABLED:
    try:
        import numba  # noqa: F401
    except ImportError:  # pragma: no cover - depends on environment
        warnings.warn(
            "numba backend requested but numba is not importable; "
            "falling back to the numpy backend",
            RuntimeWarning,
            stacklevel=2,
        )
        NUMBA_ENABLED = False

BACKEND = "numba" if NUMBA_ENABLED else "numpy"


def maybe_jit(**options):
    """Return ``numba.njit(**options)`` or a no-op decorator.

    Kernels decorated with this compile under the numba backend and run as
    ordinary Python functions under the numpy backend.  The compiled
    dispatcher keeps the original function reachable as ``.py_func``, which
    the tests use to compare both execution modes in one process.
    """
    if NUMBA_ENABLED:
        from numba import njit

        options.setdefault("cache", True)
        options.setdefault("nogil", True)
        return njit(**options)

    def passthrough(func):
        return func

    return passthrough

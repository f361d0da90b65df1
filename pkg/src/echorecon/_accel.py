"""Kernel backend selection: numba-jitted loops or pure numpy.

The hot numeric kernels (MLP matmuls, ray-parity tests, nearest-neighbour
reductions, marching-cubes cell fill) exist in two variants:

* a loop kernel compiled with ``numba.njit`` (default when numba imports),
* a pure-numpy fallback.

Set ``ECHORECON_NUMBA=0`` to force the numpy fallback.  The numba loop
kernels accumulate in a fixed element order, so per-row results are
independent of batch size; the numpy fallback goes through BLAS, which is
deterministic per call but may differ from the loop kernels in the last
few ulps.
"""

from __future__ import annotations

import functools
import os

_env = os.environ.get("ECHORECON_NUMBA", "1").strip().lower()
_WANT_NUMBA = _env not in ("0", "false", "no", "off")

try:
    if not _WANT_NUMBA:
        raise ImportError("numba disabled via ECHORECON_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised via env flag
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        """Pass-through decorator so kernel modules import unchanged."""

        def decorate(f):
            @functools.wraps(f)
            def wrapper(*a, **kw):
                return f(*a, **kw)

            return wrapper

        if args and callable(args[0]):
            return decorate(args[0])
        return decorate


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


__all__ = ["njit", "NUMBA_ENABLED", "backend_name"]

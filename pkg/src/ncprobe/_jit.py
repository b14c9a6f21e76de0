"""Select between numba-compiled kernels and the pure-numpy fallbacks.

Set ``NCPROBE_NO_JIT=1`` to force the numpy path (also used automatically
when numba is not importable). The choice is made once, at import time.
"""
import os

_disabled = os.environ.get("NCPROBE_NO_JIT", "").strip().lower() not in ("", "0", "false", "no")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAS_NUMBA = False

USE_JIT = HAS_NUMBA and not _disabled


def maybe_njit(fn):
    """Compile ``fn`` with ``numba.njit`` when available, else return it as-is.

    The compiled wrapper is lazy, so importing this package never triggers a
    compile; the first call does.
    """
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)

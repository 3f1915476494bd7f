"""Numba switch.

Set ``QSTRAT_NO_NUMBA=1`` to force the pure-numpy kernels even when numba is
installed. The flag is read once at import time.
"""
import os

_disabled = os.environ.get("QSTRAT_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def backend():
    return "numba" if HAVE_NUMBA else "numpy"

"""Numba switch shared by the hot kernels.

Setting ``MFQUAD_DISABLE_NUMBA=1`` (or running without numba installed)
routes every kernel to its pure-numpy implementation. The flag is read
once at import time; :func:`use_numba` can override it at runtime, which
is what the benchmark and the equivalence tests do.
"""
from __future__ import annotations

import os

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

_enabled = HAVE_NUMBA and os.environ.get("MFQUAD_DISABLE_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching, or the identity without numba."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _njit(*args, **kwargs)


def numba_enabled() -> bool:
    return _enabled


def use_numba(flag: bool) -> bool:
    """Enable or disable the numba path; returns the previous setting."""
    global _enabled
    previous = _enabled
    _enabled = bool(flag) and HAVE_NUMBA
    return previous

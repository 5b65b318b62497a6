"""Kernel dispatch: compiled extension when importable, pure Python otherwise.

Set ``WIKISHOCK_PURE=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("WIKISHOCK_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _speedups as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

parse_timestamp = _impl.parse_timestamp
best_split = _impl.best_split
rolling_mean = _impl.rolling_mean
days_from_civil = _impl.days_from_civil

__all__ = ["BACKEND", "parse_timestamp", "best_split", "rolling_mean", "days_from_civil"]

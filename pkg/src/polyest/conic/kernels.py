"""Kernel backend selection: compiled extension if available, numpy otherwise.

Set POLYEST_PURE_PYTHON=1 to force the numpy backend regardless of whether the
compiled extension was built. The active backend name is exposed as BACKEND.
"""

from __future__ import annotations

import os

from . import kernels_py

if os.environ.get("POLYEST_PURE_PYTHON") == "1":
    _impl = kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = kernels_py
        BACKEND = "python"

symkron_gather = _impl.symkron_gather
maxplus_conv = _impl.maxplus_conv

__all__ = ["symkron_gather", "maxplus_conv", "BACKEND"]

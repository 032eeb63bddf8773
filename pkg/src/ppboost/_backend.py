"""Kernel backend selection.

The compiled extension is preferred; the pure NumPy twin is used when the
extension is unavailable or when ``PPBOOST_PURE_PYTHON`` is set (useful for
debugging and for the backend benchmark).
"""

import os

if os.environ.get("PPBOOST_PURE_PYTHON"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _speedups as kernels  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - depends on build
        from . import _kernels_py as kernels  # type: ignore[no-redef]


def backend_name() -> str:
    return kernels.BACKEND_NAME

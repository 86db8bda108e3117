"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``LGEOM_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy fallback is used.
"""
import os

from . import _kernels_py

_force_py = os.environ.get("LGEOM_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

lagrangian = _impl.lagrangian
newton_direction = _impl.newton_direction

BACKENDS = {"python": _kernels_py}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl
else:
    try:
        from . import _kernels as _ext  # type: ignore[attr-defined]

        BACKENDS["cython"] = _ext
    except ImportError:
        pass

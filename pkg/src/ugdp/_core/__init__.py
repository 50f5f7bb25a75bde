"""Hot kernels with a compiled core and a numpy fallback.

The Cython extension ``_scan`` is used when it was built; otherwise, or when
``UGDP_PURE_PYTHON=1`` is set, the numpy module ``scan_py`` stands in.
``BACKEND`` names the implementation in use.
"""
import os

from . import scan_py

if os.environ.get("UGDP_PURE_PYTHON", "") not in ("", "0"):
    scan = scan_py
    BACKEND = "python"
else:
    try:
        from . import _scan as scan
        BACKEND = "cython"
    except ImportError:
        scan = scan_py
        BACKEND = "python"

__all__ = ["scan", "scan_py", "BACKEND"]

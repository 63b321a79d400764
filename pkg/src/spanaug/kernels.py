"""Kernel dispatch: the compiled extension when importable, else NumPy.

Set ``SPANAUG_PURE_PYTHON=1`` to force the NumPy path.
"""

import os

from . import _kernels_py

if os.environ.get("SPANAUG_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

project_upper = _impl.project_upper
flip_sample = _impl.flip_sample

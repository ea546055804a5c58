"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded.  Setting ``LDPFACTOR_PURE_PYTHON=1`` forces the
fallback regardless.
"""
import os

from . import _kernels_py

FREE = _kernels_py.FREE
LOWER = _kernels_py.LOWER
UPPER = _kernels_py.UPPER

_compiled = None
if os.environ.get("LDPFACTOR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py

project_columns = _impl.project_columns
sample_per_user = _impl.sample_per_user


def backends():
    """Map of available backend name -> kernel module."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out

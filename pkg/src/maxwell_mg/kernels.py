"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise, or
when ``MAXWELL_MG_PURE_PYTHON=1`` is set, the numpy versions are used.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MAXWELL_MG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def backend(name=None):
    """Module implementing the kernels for ``name`` ('cython'/'python'), default: active."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


csr_matvec = _impl.csr_matvec
csr_rmatvec = _impl.csr_rmatvec
whitney_local = _impl.whitney_local
barycentric_gradients = _kernels_py.barycentric_gradients

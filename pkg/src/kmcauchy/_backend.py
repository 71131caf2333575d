"""Kernel backend selection.

The compiled extension is used when it was built; set ``KMCAUCHY_BACKEND=python``
to force the numpy fallback (``compiled`` makes a missing extension an error).
"""
import os

from . import _pykernels

_choice = os.environ.get("KMCAUCHY_BACKEND", "auto").lower()
if _choice not in ("auto", "compiled", "python"):
    raise ImportError(f"KMCAUCHY_BACKEND must be auto, compiled or python, not {_choice!r}")

kernels = _pykernels
name = "python"
if _choice != "python":
    try:
        from . import _ckernels
    except ImportError:
        if _choice == "compiled":
            raise
    else:
        kernels = _ckernels
        name = "compiled"


def get(backend=None):
    """Return the kernel module for ``backend`` (``None`` means the active one)."""
    if backend is None:
        return kernels
    if backend == "python":
        return _pykernels
    if backend == "compiled":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")


def compiled_available() -> bool:
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True

"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the numpy
fallback in ``_pykernels``.  Set ``VSPREFILL_BACKEND=numpy`` to force the fallback.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_forced = os.environ.get("VSPREFILL_BACKEND", "").lower() in ("numpy", "python", "py")
backend = _ckernels if (_ckernels is not None and not _forced) else _pykernels
BACKEND = backend.BACKEND

flash_forward = backend.flash_forward
vs_aggregate = backend.vs_aggregate
row_stats = backend.row_stats
sparse_forward = backend.sparse_forward
merge_row = backend.merge_row


def get_backend(name: str | None = None):
    """Kernel module by name ("cython" or "numpy"); ``None`` returns the active one."""
    if name is None:
        return backend
    if name == "numpy":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not available")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def use_backend(name: str) -> None:
    """Switch the active backend for every caller that goes through this module."""
    global backend, BACKEND, flash_forward, vs_aggregate, row_stats, sparse_forward, merge_row
    backend = get_backend(name)
    BACKEND = backend.BACKEND
    flash_forward = backend.flash_forward
    vs_aggregate = backend.vs_aggregate
    row_stats = backend.row_stats
    sparse_forward = backend.sparse_forward
    merge_row = backend.merge_row

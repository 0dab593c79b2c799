"""Kernel backend selection.

The compiled extension is used when it imported successfully; setting
``FHV_PURE_PYTHON=1`` forces the NumPy fallback (checked on every call so
tests can flip it at runtime).
"""
from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _ckern
except ImportError:  # extension not built on this host
    _ckern = None

HAVE_COMPILED = _ckern is not None


def _forced_python() -> bool:
    return os.environ.get("FHV_PURE_PYTHON", "") not in ("", "0")


def kernels():
    """The active kernel module (compiled or NumPy)."""
    if _ckern is not None and not _forced_python():
        return _ckern
    return _kernels_py


def active_backend() -> str:
    return kernels().BACKEND_NAME

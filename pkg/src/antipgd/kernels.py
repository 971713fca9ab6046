"""Kernel backend selection: compiled extension if available, numpy fallback.

Set ``ANTIPGD_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and the backend-consistency tests). ``python -m antipgd.bench`` compares the
two backends on the hot loops.
"""

from __future__ import annotations

import os

from . import _core_py


def _select():
    if os.environ.get("ANTIPGD_PURE_PYTHON"):
        return _core_py
    try:
        from . import _core  # compiled extension, built via setup.py

        return _core
    except ImportError:
        return _core_py


def load_backend(name: str):
    """Load a backend by name ('compiled' or 'python'); raises if missing."""
    if name == "python":
        return _core_py
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")


_impl = _select()
BACKEND_NAME = _impl.BACKEND_NAME
valley_block = _impl.valley_block
recursion_block = _impl.recursion_block

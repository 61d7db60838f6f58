"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
implementation is used. Set ``ENVCLASS_PURE_PYTHON=1`` to force the
fallback.
"""

import os
from contextlib import contextmanager

from . import _pykernels

if os.environ.get("ENVCLASS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

best_split = _impl.best_split
tree_apply = _impl.tree_apply



def available() -> list[str]:
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return ["python"]
    return ["cython", "python"]


@contextmanager
def use_backend(name: str):
    """Temporarily route the module-level kernels to ``name`` (benchmarks, tests)."""
    global best_split, tree_apply, BACKEND
    if name == "cython":
        from . import _ckernels as impl
    elif name == "python":
        impl = _pykernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    saved = best_split, tree_apply, BACKEND
    best_split, tree_apply, BACKEND = impl.best_split, impl.tree_apply, name
    try:
        yield
    finally:
        best_split, tree_apply, BACKEND = saved


__all__ = ["BACKEND", "available", "best_split", "tree_apply", "use_backend"]

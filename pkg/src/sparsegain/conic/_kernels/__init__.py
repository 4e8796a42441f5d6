"""Kernel backend selection: compiled extension if available, numpy otherwise.

Set ``SPARSEGAIN_KERNEL=numpy`` or ``=cython`` to force a backend.
"""

import os

from . import numpy_impl

_requested = os.environ.get("SPARSEGAIN_KERNEL", "auto").lower()

if _requested == "numpy":
    _impl = numpy_impl
elif _requested == "cython":
    from . import cyproj as _impl
elif _requested == "auto":
    try:
        from . import cyproj as _impl
    except ImportError:
        _impl = numpy_impl
else:
    raise RuntimeError(f"unknown SPARSEGAIN_KERNEL value {_requested!r}")

BACKEND = _impl.BACKEND
make_stepper = _impl.make_stepper
project_dual = numpy_impl.project_dual

__all__ = ["BACKEND", "make_stepper", "project_dual", "numpy_impl"]

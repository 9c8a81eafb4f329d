"""Kernel backend selection.

The hot per-cell kernels (small symmetric eigendecompositions and paraboloid
projections) exist twice: a Cython extension (``_fast``) and a pure-NumPy
implementation (``_numpy_impl``).  The compiled one is picked at import when
available; set UBOT_KERNELS=numpy|fast to force a backend.
"""

import os

from . import _numpy_impl

_requested = os.environ.get("UBOT_KERNELS", "").strip().lower()

_impl = None
if _requested in ("", "fast"):
    try:
        from . import _fast as _impl  # compiled extension, optional
    except ImportError:
        _impl = None
        if _requested == "fast":
            raise ImportError(
                "UBOT_KERNELS=fast requested but the compiled extension is not available"
            )
if _impl is None:
    _impl = _numpy_impl

eigh_batch = _impl.eigh_batch
project_parabola_scalar = _impl.project_parabola_scalar
project_parabola_matrix = _impl.project_parabola_matrix


def backend_name():
    return _impl.BACKEND


def numpy_backend():
    """The reference implementation, for cross-backend tests/benchmarks."""
    return _numpy_impl

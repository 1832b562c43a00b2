"""Hot convolution kernels with selectable backend.

Two interchangeable implementations of the same contract:

* ``wseg.kernels.jit``       numba @njit loops (default when numba imports)
* ``wseg.kernels.reference`` pure numpy (im2col + BLAS tensordot)

Selection happens once at import time from the ``WSEG_BACKEND`` env var:
``numba``, ``numpy`` (alias ``reference``), or ``auto`` (default). The two
backends agree to float round-off; within one backend results are
bit-reproducible run to run. ``benchmarks/bench_kernels.py`` times both.

All arrays are NCHW, float32 or float64, stride-1 cross-correlation:

* conv2d_forward(x, w, b, pad)            -> y
* conv2d_grad_input(dy, w, pad, (H, W))   -> dx
* conv2d_grad_params(x, dy, pad)          -> (dw, db)
"""

from __future__ import annotations

import os

_requested = os.environ.get("WSEG_BACKEND", "auto").strip().lower() or "auto"

if _requested == "auto":
    try:
        from . import jit as _impl

        BACKEND = "numba"
    except ImportError:
        from . import reference as _impl

        BACKEND = "numpy"
elif _requested == "numba":
    from . import jit as _impl

    BACKEND = "numba"
elif _requested in ("numpy", "reference"):
    from . import reference as _impl

    BACKEND = "numpy"
else:
    raise ValueError(
        f"WSEG_BACKEND={_requested!r} not recognized (use numba, numpy or auto)"
    )

conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_params = _impl.conv2d_grad_params

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_grad_input",
    "conv2d_grad_params",
]

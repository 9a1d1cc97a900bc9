"""Dense kernel backend selection.

The compiled extension (``_core``) is preferred when it imported cleanly;
otherwise the numpy fallback is used.  Set TAILCL_KERNELS=numpy or
TAILCL_KERNELS=c to force a backend (forcing ``c`` raises if the extension
is missing).
"""

import os

from . import _numpy

_requested = os.environ.get("TAILCL_KERNELS", "").strip().lower()

if _requested in ("", "c"):
    try:
        from . import _core as _impl

        BACKEND = "c"
    except ImportError:
        if _requested == "c":
            raise
        _impl = _numpy
        BACKEND = "numpy"
elif _requested == "numpy":
    _impl = _numpy
    BACKEND = "numpy"
else:
    raise ValueError(f"TAILCL_KERNELS must be 'c' or 'numpy', got {_requested!r}")

affine_fwd = _impl.affine_fwd
affine_bwd = _impl.affine_bwd
relu_fwd = _impl.relu_fwd
relu_bwd = _impl.relu_bwd
scale_cols = _impl.scale_cols
row_softmax = _impl.row_softmax
row_logsumexp = _impl.row_logsumexp
normalize_rows = _impl.normalize_rows
normalize_rows_bwd = _impl.normalize_rows_bwd

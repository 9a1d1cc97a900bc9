"""Pure-numpy implementations of the dense kernels.

Fallback backend used when the compiled extension is unavailable (or when
forced via TAILCL_KERNELS=numpy).  Signatures and semantics mirror
``tailcl.kernels._core`` exactly; all inputs are float64 C-contiguous
arrays and all outputs are freshly allocated.
"""

import numpy as np


def affine_fwd(x, w, b):
    """y[n, o] = sum_i x[n, i] * w[o, i] + b[o]"""
    return x @ w.T + b


def affine_bwd(dy, x, w):
    """Gradients of the affine map: returns (dx, dw, db)."""
    dx = dy @ w
    dw = dy.T @ x
    db = dy.sum(axis=0)
    return dx, dw, db


def relu_fwd(z):
    return np.maximum(z, 0.0)


def relu_bwd(da, z):
    return np.where(z > 0.0, da, 0.0)


def scale_cols(x, m, factor):
    """x scaled columnwise by m and globally by factor (dropout fwd/bwd)."""
    return x * (m * factor)


def row_softmax(z, tau):
    """Row-wise softmax of z / tau with max subtraction."""
    t = z / tau
    t -= t.max(axis=1, keepdims=True)
    np.exp(t, out=t)
    t /= t.sum(axis=1, keepdims=True)
    return t


def row_logsumexp(z, tau):
    """Row-wise log(sum(exp(z / tau)))."""
    t = z / tau
    m = t.max(axis=1)
    return m + np.log(np.exp(t - m[:, None]).sum(axis=1))


def normalize_rows(x):
    """Unit-normalize each row; zero rows pass through with norm 0."""
    norms = np.sqrt((x * x).sum(axis=1))
    denom = np.where(norms > 0.0, norms, 1.0)
    return x / denom[:, None], norms


def normalize_rows_bwd(g, xn, norms):
    """Backward of row normalization given upstream g and cached (xn, norms)."""
    dots = (g * xn).sum(axis=1, keepdims=True)
    denom = np.where(norms > 0.0, norms, 1.0)
    return (g - dots * xn) / denom[:, None]

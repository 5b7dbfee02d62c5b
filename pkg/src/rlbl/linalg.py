"""Minimal dense vector/matrix helpers with explicit shape checking.

All heavy lifting is delegated to numpy; these wrappers exist to pin down
the deterministic semantics the models and the trainer rely on (64-bit
floats, strict shape agreement, bit-identical results for identical
inputs).
"""

import numpy as np


class DimError(ValueError):
    """Raised when operand shapes do not agree."""


def _as_f64(x):
    a = np.asarray(x, dtype=np.float64)
    return a


def matvec(m, v):
    """Matrix-vector product m @ v with shape checking."""
    m = _as_f64(m)
    v = _as_f64(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimError(f"matvec shapes {m.shape} x {v.shape}")
    return m @ v


def outer(a, b):
    """Rank-1 outer product a b^T for equal-length vectors."""
    a = _as_f64(a)
    b = _as_f64(b)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise DimError(f"outer shapes {a.shape} x {b.shape}")
    return np.outer(a, b)


def axpy(alpha, x, y):
    """Return y + alpha * x elementwise; x and y must share a shape."""
    x = _as_f64(x)
    y = _as_f64(y)
    if x.shape != y.shape:
        raise DimError(f"axpy shapes {x.shape} vs {y.shape}")
    return y + alpha * x

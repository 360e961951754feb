"""Pure numpy versions of the compiled kernels (import-time fallback)."""
import numpy as np


def phase_mul(rows, factor):
    """Multiply every row of ``rows`` in place by ``factor``."""
    if factor.shape[0] != rows.shape[1]:
        raise ValueError(f"factor length {factor.shape[0]} != row length {rows.shape[1]}")
    rows *= factor


def weighted_abs2(a, left, right):
    """Return sum_ij left_i * right_j * |a_ij|^2."""
    if left.shape[0] != a.shape[0] or right.shape[0] != a.shape[1]:
        raise ValueError("weight lengths do not match matrix shape")
    abs2 = a.real**2 + a.imag**2
    return float(left @ abs2 @ right)


def weighted_trace_square(x, w):
    """Return Tr[(diag(w) x)^2] = sum_ij w_i x_ij w_j x_ji (complex)."""
    if x.shape[0] != x.shape[1] or w.shape[0] != x.shape[0]:
        raise ValueError("expected a square matrix and matching weights")
    wx = w[:, None] * x
    return complex(np.sum(wx * wx.T))

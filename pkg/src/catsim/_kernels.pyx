# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled inner loops for propagation and trace functionals.

Same signatures and semantics as :mod:`catsim._kernels_py`.
"""



def phase_mul(double complex[:, ::1] rows, const double complex[::1] factor):
    """Multiply every row of ``rows`` in place by ``factor``."""
    cdef Py_ssize_t n = rows.shape[0], m = rows.shape[1], i, j
    cdef double ar, ai, br, bi
    if factor.shape[0] != m:
        raise ValueError(f"factor length {factor.shape[0]} != row length {m}")
    with nogil:
        for i in range(n):
            for j in range(m):
                # spelled out: C complex '*' goes through the NaN-safe __muldc3
                ar = rows[i, j].real
                ai = rows[i, j].imag
                br = factor[j].real
                bi = factor[j].imag
                rows[i, j] = (ar * br - ai * bi) + 1j * (ar * bi + ai * br)


def weighted_abs2(const double complex[:, ::1] a, const double[::1] left,
                  const double[::1] right):
    """Return sum_ij left_i * right_j * |a_ij|^2."""
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], i, j
    cdef double total = 0.0, acc
    cdef double complex z
    if left.shape[0] != n or right.shape[0] != m:
        raise ValueError("weight lengths do not match matrix shape")
    with nogil:
        for i in range(n):
            if left[i] == 0.0:
                continue
            acc = 0.0
            for j in range(m):
                z = a[i, j]
                acc = acc + right[j] * (z.real * z.real + z.imag * z.imag)
            total = total + left[i] * acc
    return total


def weighted_trace_square(const double complex[:, ::1] x, const double[::1] w):
    """Return Tr[(diag(w) x)^2] = sum_ij w_i x_ij w_j x_ji (complex)."""
    cdef Py_ssize_t n = x.shape[0], i0, j0, i, j, i_end, j_end
    cdef Py_ssize_t tile = 64
    cdef double tr = 0.0, ti = 0.0
    cdef double wi, wij, xr, xi, yr, yi
    if x.shape[1] != n or w.shape[0] != n:
        raise ValueError("expected a square matrix and matching weights")
    cdef Py_ssize_t nb = (n + tile - 1) // tile, bi, bj
    with nogil:
        for bi in range(nb):
            i0 = bi * tile
            i_end = min(i0 + tile, n)
            for bj in range(nb):
                j0 = bj * tile
                j_end = min(j0 + tile, n)
                for i in range(i0, i_end):
                    wi = w[i]
                    if wi == 0.0:
                        continue
                    for j in range(j0, j_end):
                        wij = wi * w[j]
                        xr = x[i, j].real
                        xi = x[i, j].imag
                        yr = x[j, i].real
                        yi = x[j, i].imag
                        tr = tr + wij * (xr * yr - xi * yi)
                        ti = ti + wij * (xr * yi + xi * yr)
    return complex(tr, ti)

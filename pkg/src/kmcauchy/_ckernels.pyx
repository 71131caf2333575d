# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: P1 stiffness triplets and Jacobi-preconditioned CG on CSR."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def stiffness_triplets(const double[:, ::1] xy, const cnp.int64_t[:, ::1] tri):
    cdef Py_ssize_t m = tri.shape[0]
    cdef Py_ssize_t t, i, j, pos = 0
    cdef double x0, y0, x1, y1, x2, y2, area, s
    cdef double b[3]
    cdef double c[3]
    rows_a = np.empty(9 * m, dtype=np.int64)
    cols_a = np.empty(9 * m, dtype=np.int64)
    vals_a = np.empty(9 * m, dtype=np.float64)
    areas_a = np.empty(m, dtype=np.float64)
    cdef cnp.int64_t[::1] rows = rows_a
    cdef cnp.int64_t[::1] cols = cols_a
    cdef double[::1] vals = vals_a
    cdef double[::1] areas = areas_a
    for t in range(m):
        x0 = xy[tri[t, 0], 0]; y0 = xy[tri[t, 0], 1]
        x1 = xy[tri[t, 1], 0]; y1 = xy[tri[t, 1], 1]
        x2 = xy[tri[t, 2], 0]; y2 = xy[tri[t, 2], 1]
        area = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
        areas[t] = area
        b[0] = y1 - y2; b[1] = y2 - y0; b[2] = y0 - y1
        c[0] = x2 - x1; c[1] = x0 - x2; c[2] = x1 - x0
        s = 0.25 / area
        for i in range(3):
            for j in range(3):
                rows[pos] = tri[t, i]
                cols[pos] = tri[t, j]
                vals[pos] = (b[i] * b[j] + c[i] * c[j]) * s
                pos += 1
    return rows_a, cols_a, vals_a, areas_a


cdef inline void _matvec(const cnp.int32_t[::1] indptr, const cnp.int32_t[::1] indices,
                         const double[::1] data, double[::1] x, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc


cdef inline double _dot(double[::1] a, double[::1] b) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * b[i]
    return acc


cdef inline void _demean(double[::1] a) noexcept nogil:
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double mean = 0.0
    for i in range(n):
        mean += a[i]
    mean /= n
    for i in range(n):
        a[i] -= mean


def pcg(const cnp.int32_t[::1] indptr, const cnp.int32_t[::1] indices, const double[::1] data,
        b_in, x0_in, const double[::1] dinv, double rtol, Py_ssize_t maxiter, bint project):
    """Solve ``A x = b`` by Jacobi-preconditioned CG.

    Returns ``(x, iterations, relative_true_residual)``.  With ``project`` the
    constant mode is removed from the residual every step (singular Neumann
    systems with compatible right-hand side).
    """
    cdef Py_ssize_t n = dinv.shape[0]
    cdef Py_ssize_t i, it = 0, restarts = 0
    b_a = np.array(b_in, dtype=np.float64, copy=True)
    x_a = np.array(x0_in, dtype=np.float64, copy=True)
    r_a = np.empty(n); z_a = np.empty(n); p_a = np.empty(n); ap_a = np.empty(n)
    cdef double[::1] b = b_a
    cdef double[::1] x = x_a
    cdef double[::1] r = r_a
    cdef double[::1] z = z_a
    cdef double[::1] p = p_a
    cdef double[::1] ap = ap_a
    cdef double bnorm, rz, rz_new, alpha, beta, pap, rnorm, target
    if n == 0:
        return x_a, 0, 0.0
    with nogil:
        if project:
            _demean(b)
        bnorm = sqrt(_dot(b, b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    target = rtol * bnorm
    with nogil:
        while True:
            _matvec(indptr, indices, data, x, ap)
            for i in range(n):
                r[i] = b[i] - ap[i]
            if project:
                _demean(r)
            rnorm = sqrt(_dot(r, r))
            if rnorm <= target or it >= maxiter or restarts > 3:
                break
            restarts += 1
            for i in range(n):
                z[i] = dinv[i] * r[i]
                p[i] = z[i]
            rz = _dot(r, z)
            while it < maxiter:
                _matvec(indptr, indices, data, p, ap)
                pap = _dot(p, ap)
                if pap <= 0.0:
                    break
                alpha = rz / pap
                for i in range(n):
                    x[i] += alpha * p[i]
                    r[i] -= alpha * ap[i]
                if project:
                    _demean(r)
                it += 1
                if sqrt(_dot(r, r)) <= target:
                    break
                for i in range(n):
                    z[i] = dinv[i] * r[i]
                rz_new = _dot(r, z)
                beta = rz_new / rz
                rz = rz_new
                for i in range(n):
                    p[i] = z[i] + beta * p[i]
    return x_a, it, rnorm / bnorm

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: CSR * dense products and the cyclic Jacobi eigensolver.

The pure-numpy twins live in ``_kernels_py``; ``_backend`` picks one at
import time. Both must keep a fixed per-row accumulation order so results
are deterministic for a given backend.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def csr_dense_matmul(
    cnp.int64_t[::1] indptr,
    cnp.int64_t[::1] indices,
    double[::1] data,
    double[:, ::1] x,
    double[:, ::1] out,
):
    """out[i, :] = sum_k data[k] * x[indices[k], :] over row i's entries, in order."""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t n_cols = x.shape[1]
    cdef Py_ssize_t i, k, j, c
    cdef double v
    with nogil:
        for i in range(n_rows):
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                v = data[k]
                for c in range(n_cols):
                    out[i, c] += v * x[j, c]


def jacobi_sweeps(double[:, ::1] a, double[:, ::1] v, double tol, int max_sweeps):
    """Cyclic Jacobi rotations on symmetric ``a`` (destroyed), eigenvectors into ``v``.

    ``tol`` is an absolute threshold on the Frobenius norm of the
    off-diagonal part. Returns the number of completed sweeps, or -1 if the
    threshold was not reached within ``max_sweeps``.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, q, i, sweep
    cdef double off, apq, app, aqq, theta, t, c, s, tmp_p, tmp_q

    for i in range(n):
        for p in range(n):
            v[i, p] = 0.0
        v[i, i] = 1.0

    with nogil:
        for sweep in range(max_sweeps):
            off = 0.0
            for p in range(n - 1):
                for q in range(p + 1, n):
                    off += 2.0 * a[p, q] * a[p, q]
            off = sqrt(off)
            if off <= tol:
                with gil:
                    return sweep
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if fabs(apq) == 0.0:
                        continue
                    app = a[p, p]
                    aqq = a[q, q]
                    theta = (aqq - app) / (2.0 * apq)
                    if theta >= 0.0:
                        t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                    else:
                        t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                    c = 1.0 / sqrt(t * t + 1.0)
                    s = t * c
                    for i in range(n):
                        tmp_p = a[i, p]
                        tmp_q = a[i, q]
                        a[i, p] = c * tmp_p - s * tmp_q
                        a[i, q] = s * tmp_p + c * tmp_q
                    for i in range(n):
                        tmp_p = a[p, i]
                        tmp_q = a[q, i]
                        a[p, i] = c * tmp_p - s * tmp_q
                        a[q, i] = s * tmp_p + c * tmp_q
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for i in range(n):
                        tmp_p = v[i, p]
                        tmp_q = v[i, q]
                        v[i, p] = c * tmp_p - s * tmp_q
                        v[i, q] = s * tmp_p + c * tmp_q
    return -1

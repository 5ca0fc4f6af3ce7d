"""Pure-numpy fallbacks for the compiled kernels in ``_kernels.pyx``.

Same call signatures, same deterministic in-order accumulation per row.
Selected by ``_backend`` when the extension is missing or when
``ARMAGRAPH_PURE_PYTHON`` is set.
"""

import math

import numpy as np


def csr_dense_matmul(indptr, indices, data, x, out):
    if len(indices) == 0:
        return
    prod = data[:, None] * x[indices]
    starts = indptr[:-1]
    nonempty = np.diff(indptr) > 0
    # reduceat over the starts of non-empty rows: consecutive starts bracket
    # exactly one row's entries because empty rows do not advance indptr.
    sums = np.add.reduceat(prod, starts[nonempty], axis=0)
    out[nonempty] += sums


def jacobi_sweeps(a, v, tol, max_sweeps):
    n = a.shape[0]
    v[:] = np.eye(n)
    for sweep in range(max_sweeps):
        off = math.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vcol_p = v[:, p].copy()
                vcol_q = v[:, q].copy()
                v[:, p] = c * vcol_p - s * vcol_q
                v[:, q] = s * vcol_p + c * vcol_q
    return -1

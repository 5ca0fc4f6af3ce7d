"""CSR sparse matrices and the graph operators built from them.

Dense node-feature matrices are plain 2-D float64 C-contiguous numpy
arrays throughout the package; only the graph operators get a dedicated
CSR type. All operators constructed here are symmetric, and every
function is pure: matrices are never mutated after construction.
"""

import hashlib

import numpy as np

from armagraph import _backend
from armagraph.errors import ConvergenceError, NumericError, ResourceCapError

EIG_SIZE_CAP = 4000
# Relative off-diagonal Frobenius threshold for the Jacobi sweep loop. An
# absolute 1e-12 is unreachable in double precision once n is in the
# hundreds, so the threshold is scaled by the input norm.
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 50


def as_dense(x) -> np.ndarray:
    """Coerce to the package-wide dense layout: 2-D float64, C-contiguous."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"expected a 1-D or 2-D array, got ndim={arr.ndim}")
    return arr


class CsrMatrix:
    """Immutable CSR matrix, float64 values, int64 indices.

    Invariants: ``indptr`` is non-decreasing with ``indptr[0] == 0`` and
    ``indptr[-1] == len(indices)``; column indices are strictly increasing
    within each row and all < ``n_cols``.
    """

    __slots__ = ("n_rows", "n_cols", "indptr", "indices", "data", "_transpose", "_hash")

    def __init__(self, n_rows, n_cols, indptr, indices, data):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self._transpose = None
        self._hash = None

    @property
    def nnz(self) -> int:
        return len(self.data)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def validate(self):
        if self.indptr.shape != (self.n_rows + 1,):
            raise ValueError("indptr length must be n_rows + 1")
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ValueError("indptr must start at 0 and end at nnz")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be non-decreasing")
        if len(self.indices) != len(self.data):
            raise ValueError("indices and data length mismatch")
        if self.nnz and (self.indices.min() < 0 or self.indices.max() >= self.n_cols):
            raise ValueError("column index out of range")
        for i in range(self.n_rows):
            cols = self.indices[self.indptr[i] : self.indptr[i + 1]]
            if len(cols) > 1 and np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {i} columns are not strictly increasing")
        return self

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        row_ids = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        out[row_ids, self.indices] = self.data
        return out

    def row_sums(self) -> np.ndarray:
        out = np.zeros(self.n_rows)
        if self.nnz:
            rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
            np.add.at(out, rows, self.data)
        return out

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(min(self.n_rows, self.n_cols))
        for i in range(len(diag)):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            k = np.searchsorted(self.indices[lo:hi], i)
            if k < hi - lo and self.indices[lo + k] == i:
                diag[i] = self.data[lo + k]
        return diag

    def transpose(self) -> "CsrMatrix":
        if self._transpose is None:
            rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
            self._transpose = csr_from_coo(
                self.n_cols, self.n_rows, self.indices, rows, self.data, sum_duplicates=False
            )
        return self._transpose

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        if self.n_rows != self.n_cols:
            return False
        t = self.transpose()
        return (
            np.array_equal(t.indptr, self.indptr)
            and np.array_equal(t.indices, self.indices)
            and bool(np.all(np.abs(t.data - self.data) <= tol))
        )

    def scale(self, c: float) -> "CsrMatrix":
        return CsrMatrix(self.n_rows, self.n_cols, self.indptr, self.indices, self.data * c)

    def content_hash(self) -> str:
        """SHA-256 over shape and the CSR arrays; used as a cache key."""
        if self._hash is None:
            h = hashlib.sha256()
            h.update(np.int64([self.n_rows, self.n_cols]).tobytes())
            h.update(self.indptr.tobytes())
            h.update(self.indices.tobytes())
            h.update(self.data.tobytes())
            self._hash = h.hexdigest()
        return self._hash

    def __matmul__(self, x):
        return spmm(self, x)

    def __repr__(self):
        return f"CsrMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


class SpectralDecomposition:
    """Eigenvalues (ascending) and the matching orthonormal eigenvector columns."""

    __slots__ = ("eigenvalues", "eigenvectors")

    def __init__(self, eigenvalues, eigenvectors):
        self.eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
        self.eigenvectors = as_dense(eigenvectors)


def csr_from_coo(n_rows, n_cols, rows, cols, vals, sum_duplicates=True, drop_zeros=True):
    """Build a CsrMatrix from COO triplets (sorted, deduplicated, zeros dropped)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if sum_duplicates and len(rows):
        keys = rows * n_cols + cols
        first = np.concatenate([[True], np.diff(keys) != 0])
        group = np.cumsum(first) - 1
        summed = np.zeros(group[-1] + 1)
        np.add.at(summed, group, vals)
        rows, cols, vals = rows[first], cols[first], summed
    if drop_zeros and len(vals):
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return CsrMatrix(n_rows, n_cols, indptr, cols, vals)


def build_csr(n_nodes: int, edges) -> CsrMatrix:
    """Adjacency matrix from an undirected edge list.

    Parameters
    ----------
    n_nodes : int
        Number of nodes; all indices must be < n_nodes.
    edges : iterable of (src, dst, weight)
        May contain duplicates and both directions; duplicates are summed
        and each undirected edge is stored in both directions.

    Raises
    ------
    ValueError
        On an out-of-range index or a negative weight.
    """
    edges = list(edges)
    if not edges:
        return CsrMatrix(n_nodes, n_nodes, np.zeros(n_nodes + 1, dtype=np.int64), [], [])
    arr = np.asarray([(int(s), int(d), float(w)) for s, d, w in edges], dtype=np.float64)
    src = arr[:, 0].astype(np.int64)
    dst = arr[:, 1].astype(np.int64)
    w = arr[:, 2]
    if src.min() < 0 or dst.min() < 0 or src.max() >= n_nodes or dst.max() >= n_nodes:
        raise ValueError("edge endpoint out of range")
    if np.any(w < 0):
        raise ValueError("negative edge weight in adjacency build")
    off = src != dst
    rows = np.concatenate([src, dst[off]])
    cols = np.concatenate([dst, src[off]])
    vals = np.concatenate([w, w[off]])
    return csr_from_coo(n_nodes, n_nodes, rows, cols, vals)


def _coo_of(mat: CsrMatrix):
    rows = np.repeat(np.arange(mat.n_rows), np.diff(mat.indptr))
    return rows, mat.indices, mat.data


def _inv_sqrt_degrees(degrees: np.ndarray) -> np.ndarray:
    # Zero-degree nodes get d^{-1/2} = 0 so isolated nodes stay inert.
    out = np.zeros_like(degrees)
    pos = degrees > 0
    out[pos] = 1.0 / np.sqrt(degrees[pos])
    return out


def normalized_laplacian(adj: CsrMatrix) -> CsrMatrix:
    """Symmetrically normalized Laplacian ``I - D^{-1/2} A D^{-1/2}``.

    Isolated nodes keep a diagonal 1 and no off-diagonal entries, which
    keeps the spectrum inside [0, 2].
    """
    rows, cols, vals = _coo_of(adj)
    dinv = _inv_sqrt_degrees(adj.row_sums())
    n = adj.n_rows
    all_rows = np.concatenate([np.arange(n), rows])
    all_cols = np.concatenate([np.arange(n), cols])
    all_vals = np.concatenate([np.ones(n), -dinv[rows] * vals * dinv[cols]])
    return csr_from_coo(n, n, all_rows, all_cols, all_vals)


def propagation_matrix(laplacian: CsrMatrix) -> CsrMatrix:
    """``I - L`` entrywise: the symmetrically normalized adjacency.

    This is the one-hop propagation operator used by the recursive
    rational filters; its eigenvalues are ``1 - lambda`` in [-1, 1].
    """
    rows, cols, vals = _coo_of(laplacian)
    n = laplacian.n_rows
    all_rows = np.concatenate([np.arange(n), rows])
    all_cols = np.concatenate([np.arange(n), cols])
    all_vals = np.concatenate([np.ones(n), -vals])
    return csr_from_coo(n, n, all_rows, all_cols, all_vals)


def gcn_adjacency(adj: CsrMatrix, gamma: float = 1.0) -> CsrMatrix:
    """Self-loop-augmented normalized adjacency ``D~^{-1/2} (A + gamma*I) D~^{-1/2}``.

    ``D~`` is the degree of ``A + gamma*I``. A node with zero augmented
    degree (gamma = 0 and isolated) yields an all-zero row, not an error.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    rows, cols, vals = _coo_of(adj)
    n = adj.n_rows
    all_rows = np.concatenate([rows, np.arange(n)])
    all_cols = np.concatenate([cols, np.arange(n)])
    all_vals = np.concatenate([vals, np.full(n, float(gamma))])
    merged = csr_from_coo(n, n, all_rows, all_cols, all_vals)
    dinv = _inv_sqrt_degrees(merged.row_sums())
    mrows, mcols, mvals = _coo_of(merged)
    return csr_from_coo(n, n, mrows, mcols, dinv[mrows] * mvals * dinv[mcols])


def scaled_laplacian(laplacian: CsrMatrix, lambda_max: float = 2.0) -> CsrMatrix:
    """``2 L / lambda_max - I``, mapping the spectrum into [-1, 1]."""
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    rows, cols, vals = _coo_of(laplacian)
    n = laplacian.n_rows
    all_rows = np.concatenate([rows, np.arange(n)])
    all_cols = np.concatenate([cols, np.arange(n)])
    all_vals = np.concatenate([vals * (2.0 / lambda_max), -np.ones(n)])
    return csr_from_coo(n, n, all_rows, all_cols, all_vals)


def spmm(s: CsrMatrix, x) -> np.ndarray:
    """Sparse-dense product ``S @ X``; cost proportional to nnz(S) * X.shape[1]."""
    x = as_dense(x)
    if x.shape[0] != s.n_cols:
        raise ValueError(f"dimension mismatch: {s.shape} @ {x.shape}")
    out = np.zeros((s.n_rows, x.shape[1]))
    _backend.csr_dense_matmul(s.indptr, s.indices, s.data, x, out)
    return out


def symmetric_eig(mat, size_cap: int = EIG_SIZE_CAP) -> SpectralDecomposition:
    """Full eigendecomposition of a dense symmetric matrix by cyclic Jacobi.

    Eigenvalues come back ascending with orthonormal eigenvector columns.
    Intended for desk-scale oracles and probes, hence the size cap.
    """
    a = as_dense(mat).copy()
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError("matrix must be square")
    if n > size_cap:
        raise ResourceCapError(f"eigensolver cap exceeded: n={n} > {size_cap}")
    sym_err = np.max(np.abs(a - a.T)) if n else 0.0
    if sym_err > 1e-10:
        raise NumericError(f"matrix is not symmetric (max asymmetry {sym_err:.3e})")
    a = 0.5 * (a + a.T)
    v = np.empty_like(a)
    tol = JACOBI_TOL * max(1.0, float(np.linalg.norm(a)))
    sweeps = _backend.jacobi_sweeps(a, v, tol, JACOBI_MAX_SWEEPS)
    if sweeps < 0:
        raise ConvergenceError(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SpectralDecomposition(w[order], v[:, order])


def estimate_lambda_max(
    laplacian: CsrMatrix, tol: float = 1e-8, max_iter: int = 5000, seed: int = 0
) -> float:
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    Converges when the residual ||L v - theta v||_2 drops below ``tol``,
    which for a symmetric matrix bounds the eigenvalue error by ``tol``.
    Deterministic for a fixed seed.
    """
    from armagraph.rng import make_rng

    n = laplacian.n_rows
    if n == 0:
        return 0.0
    v = make_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    theta = 0.0
    for _ in range(max_iter):
        lv = spmm(laplacian, v)[:, 0]
        theta = float(v @ lv)
        residual = np.linalg.norm(lv - theta * v)
        if residual <= tol:
            return theta
        norm = np.linalg.norm(lv)
        if norm == 0.0:
            return 0.0  # operator annihilated the iterate: lambda_max of PSD zero matrix
        v = lv / norm
    raise ConvergenceError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations",
        last_iterate=theta,
        iterations=max_iter,
    )

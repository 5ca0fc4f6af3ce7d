"""Non-trainable graph filters and their analytic frequency responses.

Three families: polynomial (plain and Chebyshev), first-order rational
filters run as a sparse recursion or solved in closed form, and exact
rational filters of arbitrary order via a dense solve. The spectral
application U diag(h) U^T X is the ground truth the node-domain paths are
checked against.

Sign conventions: ``rational_response`` uses the transfer-function form
with denominator ``1 + sum q_k lambda^k``; ``rational_filter_exact``
solves the node-space relation with denominator operator
``I - sum q_k L^k``. The two match after negating q, which is what
``negate_denominator`` is for. Both are kept verbatim rather than silently
reconciled.
"""

from dataclasses import dataclass, field

import numpy as np

from armagraph.errors import ConvergenceError, NumericError, ResourceCapError
from armagraph.sparse import CsrMatrix, SpectralDecomposition, as_dense, spmm

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000
DENSE_CAP = 4000
_POLE_EPS = 1e-12


@dataclass(frozen=True)
class PolyFilterSpec:
    """Polynomial filter weights w_0..w_K acting as sum_k w_k L^k."""

    weights: tuple = field()

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) < 1 or not all(np.isfinite(w)):
            raise ValueError("polynomial weights must be a non-empty finite sequence")
        object.__setattr__(self, "weights", w)

    @property
    def order(self) -> int:
        return len(self.weights) - 1


@dataclass(frozen=True)
class RationalFilterSpec:
    """Rational filter coefficients: numerator p_0..p_K, denominator q_1..q_K."""

    numerator: tuple = field()
    denominator: tuple = field(default=())

    def __post_init__(self):
        p = tuple(float(v) for v in self.numerator)
        q = tuple(float(v) for v in self.denominator)
        if len(p) < 1 or not all(np.isfinite(p)) or not all(np.isfinite(q)):
            raise ValueError("rational coefficients must be finite with a non-empty numerator")
        object.__setattr__(self, "numerator", p)
        object.__setattr__(self, "denominator", q)

    @property
    def order(self) -> int:
        return max(len(self.numerator) - 1, len(self.denominator))


@dataclass(frozen=True)
class Arma1Params:
    """First-order rational filter (a, b); pole p = 1/a, residue r = -b/a."""

    a: float
    b: float

    @property
    def pole(self) -> float:
        if self.a == 0.0:
            raise NumericError("a = 0 has no finite pole")
        return 1.0 / self.a

    @property
    def residue(self) -> float:
        if self.a == 0.0:
            raise NumericError("a = 0 has no finite pole-residue form")
        return -self.b / self.a


def negate_denominator(spec: RationalFilterSpec) -> RationalFilterSpec:
    """Convert between the transfer-function and node-space q conventions."""
    return RationalFilterSpec(spec.numerator, tuple(-q for q in spec.denominator))


def spectral_filter_apply(decomp: SpectralDecomposition, response, x) -> np.ndarray:
    """Exact filtering U diag(h) U^T X for a per-eigenvalue response array."""
    x = as_dense(x)
    h = np.asarray(response, dtype=np.float64)
    n = decomp.eigenvectors.shape[0]
    if h.shape != (n,):
        raise ValueError(f"response must have one entry per node ({n}), got {h.shape}")
    u = decomp.eigenvectors
    return u @ (h[:, None] * (u.T @ x))


def poly_filter_apply(laplacian: CsrMatrix, spec: PolyFilterSpec, x) -> np.ndarray:
    """sum_k w_k L^k X by Horner's rule over sparse products (L^k never formed)."""
    x = as_dense(x)
    w = spec.weights
    out = w[-1] * x
    for k in range(len(w) - 2, -1, -1):
        out = spmm(laplacian, out) + w[k] * x
    return out


def cheb_filter_apply(l_scaled: CsrMatrix, spec: PolyFilterSpec, x) -> np.ndarray:
    """sum_k w_k T_k(L_scaled) X via the T_k = 2 L T_{k-1} - T_{k-2} recurrence."""
    x = as_dense(x)
    w = spec.weights
    t_prev = x
    out = w[0] * x
    if len(w) == 1:
        return out
    t_cur = spmm(l_scaled, x)
    out = out + w[1] * t_cur
    for k in range(2, len(w)):
        t_next = 2.0 * spmm(l_scaled, t_cur) - t_prev
        out = out + w[k] * t_next
        t_prev, t_cur = t_cur, t_next
    return out


def arma1_recursion(
    m_op: CsrMatrix,
    params: Arma1Params,
    x,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
):
    """Iterate X <- a M X + b X0 from X0 until the sup-norm step is below tol.

    Returns (filtered signal, iterations). Requires |a| < 1 so the fixed
    point b (I - a M)^{-1} X0 exists and the iteration contracts.
    """
    if abs(params.a) >= 1.0:
        raise NumericError(f"recursion requires |a| < 1, got a={params.a}")
    x0 = as_dense(x)
    cur = x0
    for it in range(1, max_iter + 1):
        nxt = params.a * spmm(m_op, cur) + params.b * x0
        step = float(np.max(np.abs(nxt - cur))) if nxt.size else 0.0
        cur = nxt
        if step <= tol:
            return cur, it
    raise ConvergenceError(
        f"recursion did not reach tol={tol} within {max_iter} iterations",
        last_iterate=cur,
        iterations=max_iter,
    )


def arma1_closed_form(m_op: CsrMatrix, params: Arma1Params, x) -> np.ndarray:
    """Fixed point b (I - a M)^{-1} X by dense LU solve (desk-scale oracle)."""
    x = as_dense(x)
    n = m_op.n_rows
    if n > DENSE_CAP:
        raise ResourceCapError(f"dense solve cap exceeded: n={n} > {DENSE_CAP}")
    system = np.eye(n) - params.a * m_op.to_dense()
    try:
        return np.linalg.solve(system, params.b * x)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular system in closed form: {exc}") from exc


def arma_k_apply(
    m_op: CsrMatrix,
    params_list,
    x,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """Sum of K first-order recursions; branches summed in index order."""
    x = as_dense(x)
    out = np.zeros_like(x)
    for params in params_list:
        branch, _ = arma1_recursion(m_op, params, x, tol=tol, max_iter=max_iter)
        out += branch
    return out


def rational_filter_exact(laplacian: CsrMatrix, spec: RationalFilterSpec, x) -> np.ndarray:
    """Solve (I - sum_k q_k L^k) Xbar = (sum_k p_k L^k) X with a dense LU solve.

    Follows the node-space sign convention (see module docstring); pair
    with ``rational_response`` only after ``negate_denominator``.
    """
    x = as_dense(x)
    n = laplacian.n_rows
    if n > DENSE_CAP:
        raise ResourceCapError(f"dense solve cap exceeded: n={n} > {DENSE_CAP}")
    numerator = poly_filter_apply(laplacian, PolyFilterSpec(spec.numerator), x)
    if not spec.denominator:
        return numerator
    system = np.eye(n)
    l_dense = laplacian.to_dense()
    power = np.eye(n)
    for q in spec.denominator:
        power = power @ l_dense
        system -= q * power
    try:
        return np.linalg.solve(system, numerator)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular rational system: {exc}") from exc


def _checked_div(num, den):
    den = np.asarray(den, dtype=np.float64)
    if np.any(np.abs(den) < _POLE_EPS):
        raise NumericError("filter response evaluated at a pole")
    return num / den


def poly_response(spec: PolyFilterSpec, lam):
    """sum_k w_k lambda^k, vectorized over lambda."""
    lam = np.asarray(lam, dtype=np.float64)
    return sum(w * lam**k for k, w in enumerate(spec.weights))


def rational_response(spec: RationalFilterSpec, lam):
    """p(lambda) / (1 + sum_k q_k lambda^k) -- transfer-function convention."""
    lam = np.asarray(lam, dtype=np.float64)
    num = sum(p * lam**k for k, p in enumerate(spec.numerator))
    den = 1.0 + sum(q * lam ** (k + 1) for k, q in enumerate(spec.denominator))
    return _checked_div(num, den)


def arma1_response(params: Arma1Params, mu):
    """b / (1 - a mu), the first-order response over the shifted spectrum mu."""
    mu = np.asarray(mu, dtype=np.float64)
    return _checked_div(params.b, 1.0 - params.a * mu)


def arma_k_response(params_list, mu):
    """Response of a sum of first-order branches: sum_k b_k / (1 - a_k mu)."""
    mu = np.asarray(mu, dtype=np.float64)
    return sum(arma1_response(p, mu) for p in params_list)

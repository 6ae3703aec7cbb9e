"""Sparse matrices, linear operators, and iterative spectral routines.

Everything here is deterministic given an integer seed; the solvers rely on
that for reproducible traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


def vec(x):
    """Column-major vectorization of a matrix."""
    return np.asarray(x, dtype=float).ravel(order="F")


def unvec(x, rows, cols):
    """Inverse of :func:`vec`."""
    x = np.asarray(x, dtype=float)
    if x.size != rows * cols:
        raise ValueError(f"cannot reshape length-{x.size} vector to {rows}x{cols}")
    return x.reshape((rows, cols), order="F")


@dataclass(eq=False)
class SparseMatrix:
    """CSR matrix with explicit offset/index/value arrays.

    Invariants: ``row_offsets`` is non-decreasing with ``row_offsets[0] == 0``
    and ``row_offsets[-1] == len(values)``; column indices are strictly
    increasing within each row; all values are finite.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.row_offsets = np.asarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.asarray(self.col_indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        self.validate()

    def validate(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("negative dimensions")
        if self.row_offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.values.size:
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if self.col_indices.shape != self.values.shape:
            raise ValueError("col_indices and values must have equal length")
        if self.col_indices.size:
            if self.col_indices.min() < 0 or self.col_indices.max() >= self.n_cols:
                raise ValueError("column index out of range")
            # strict increase inside every row; boundaries may reset
            inc = np.diff(self.col_indices) <= 0
            inner = np.ones(self.col_indices.size - 1, dtype=bool)
            inner[self.row_offsets[1:-1] - 1] = False
            if np.any(inc & inner):
                raise ValueError("column indices must strictly increase within a row")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite value in sparse matrix")

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.values.size)

    @cached_property
    def _csr(self):
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.n_rows, self.n_cols),
        )

    @classmethod
    def from_scipy(cls, a):
        a = sp.csr_matrix(a)
        a.sum_duplicates()
        a.sort_indices()
        return cls(a.shape[0], a.shape[1], a.indptr, a.indices, a.data)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        coo = sp.coo_matrix((vals, (rows, cols)), shape=shape)
        return cls.from_scipy(coo)

    @classmethod
    def from_dense(cls, a):
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=float)))

    @classmethod
    def eye(cls, n):
        return cls.from_scipy(sp.eye(n, format="csr"))

    def to_scipy(self):
        return self._csr

    def to_dense(self):
        return self._csr.toarray()

    def transpose(self):
        return SparseMatrix.from_scipy(self._csr.T)


def spmv(a: SparseMatrix, x):
    """Sparse matrix-vector product ``a @ x``."""
    return a.to_scipy() @ np.asarray(x, dtype=float)


def spmv_t(a: SparseMatrix, y):
    """Adjoint product ``a.T @ y``."""
    return a.to_scipy().T @ np.asarray(y, dtype=float)


def sparse_matmul(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    if a.n_cols != b.n_rows:
        raise ValueError("inner dimensions do not match")
    return SparseMatrix.from_scipy(a.to_scipy() @ b.to_scipy())


class LinearOperator:
    """Matrix-free linear map with an explicit adjoint."""

    def __init__(self, shape, apply_fn, adjoint_fn):
        self.shape = (int(shape[0]), int(shape[1]))
        self._apply = apply_fn
        self._adjoint = adjoint_fn

    def apply(self, x):
        return self._apply(np.asarray(x, dtype=float))

    def apply_adjoint(self, y):
        return self._adjoint(np.asarray(y, dtype=float))


def dense_operator(a, scale=1.0):
    a = np.asarray(a, dtype=float)
    return LinearOperator(a.shape, lambda x: scale * (a @ x), lambda y: scale * (a.T @ y))


def sparse_operator(a: SparseMatrix):
    return LinearOperator(a.shape, lambda x: spmv(a, x), lambda y: spmv_t(a, y))


def as_operator(a):
    if isinstance(a, LinearOperator):
        return a
    if isinstance(a, SparseMatrix):
        return sparse_operator(a)
    return dense_operator(a)


def dense_svd(a):
    """Full SVD of a dense matrix, returned as (U, s, Vt).

    Thin wrapper over LAPACK; kept behind one name so the dense path is easy
    to audit.  Raises on non-finite input.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite entries in matrix passed to dense_svd")
    return np.linalg.svd(a, full_matrices=False)


@dataclass
class TopSingularPair:
    sigma: float
    u: np.ndarray
    v: np.ndarray
    converged: bool
    degenerate: bool = False
    iterations: int = 0


def _random_unit(rng, n):
    v = rng.standard_normal(n)
    nv = np.linalg.norm(v)
    while nv == 0.0:
        v = rng.standard_normal(n)
        nv = np.linalg.norm(v)
    return v / nv


def _orth_against(p, basis):
    # two rounds of classical Gram-Schmidt; enough for full reorthogonalization
    if basis.shape[1]:
        p = p - basis @ (basis.T @ p)
        p = p - basis @ (basis.T @ p)
    return p


def _bidiag_top(alphas, betas):
    k = len(alphas)
    bk = np.zeros((k, k))
    bk[np.arange(k), np.arange(k)] = alphas
    if k > 1:
        bk[np.arange(k - 1), np.arange(1, k)] = betas[: k - 1]
    ub, s, vbt = np.linalg.svd(bk)
    return s[0], ub[:, 0], vbt[0]


def _bidiag_top_rect(alphas, betas):
    # k x (k+1) factor arising when A v_{k+1} = beta_k u_k exactly
    k = len(alphas)
    bk = np.zeros((k, k + 1))
    bk[np.arange(k), np.arange(k)] = alphas
    bk[np.arange(k), np.arange(1, k + 1)] = betas[:k]
    ub, s, vbt = np.linalg.svd(bk, full_matrices=False)
    return s[0], ub[:, 0], vbt[0]


def top_singular_pair(a, tol=1e-8, max_iter=500, seed=0, restart_dim=48):
    """Leading singular triplet of a linear operator.

    Golub-Kahan bidiagonalization with full reorthogonalization, restarted
    from the current Ritz vector when the subspace hits ``restart_dim``.
    Residual targets: ``|A v - sigma u| <= tol * sigma`` and symmetrically
    for the adjoint.  Deterministic for a fixed seed.

    Parameters
    ----------
    a : LinearOperator, SparseMatrix or ndarray
    tol : float
        Relative residual tolerance.
    max_iter : int
        Total bidiagonalization steps across restarts.
    seed : int
        Seed for the random start vector.

    Returns
    -------
    TopSingularPair
        ``converged`` is False when the step budget ran out; ``degenerate``
        marks a (numerically) zero operator, in which case ``sigma`` is 0 and
        the vectors are arbitrary unit vectors.
    """
    op = as_operator(a)
    m, n = op.shape
    if m <= 0 or n <= 0:
        raise ValueError("operator must have positive dimensions")
    rng = np.random.default_rng(seed)
    dim_cap = max(2, min(restart_dim, min(m, n)))
    eps_rel = 1e-14

    steps = 0
    scale = 0.0
    start_v = _random_unit(rng, n)
    fresh_draws = 0
    best = TopSingularPair(0.0, np.zeros(m), start_v, converged=False)

    def finish(sigma, u, v, converged, degenerate=False):
        return TopSingularPair(float(sigma), u, v, converged, degenerate, steps)

    while steps < max_iter:
        u_basis = np.zeros((m, dim_cap))
        v_basis = np.zeros((n, dim_cap))
        alphas: list[float] = []
        betas: list[float] = []
        v = start_v
        v_basis[:, 0] = v
        k = 0
        ritz = None
        invariant = False
        left_exhausted = False

        while k < dim_cap and steps < max_iter:
            p = op.apply(v)
            if k > 0:
                p = p - betas[-1] * u_basis[:, k - 1]
            p = _orth_against(p, u_basis[:, :k])
            alpha = float(np.linalg.norm(p))
            scale = max(scale, alpha)
            if alpha <= scale * eps_rel or alpha == 0.0:
                invariant = True
                left_exhausted = k > 0
                break
            u_basis[:, k] = p / alpha
            alphas.append(alpha)

            r = op.apply_adjoint(u_basis[:, k])
            r = r - alpha * v
            r = _orth_against(r, v_basis[:, : k + 1])
            beta = float(np.linalg.norm(r))
            betas.append(beta)
            steps += 1
            k += 1

            sigma, ub, vb = _bidiag_top(alphas, betas)
            ritz = (sigma, ub, vb, k)
            # exact GK relation: the only residual lives in the trailing beta
            if beta * abs(ub[-1]) <= tol * sigma or k == min(m, n):
                u_r = u_basis[:, :k] @ ub
                v_r = v_basis[:, :k] @ vb
                u_r /= np.linalg.norm(u_r)
                v_r /= np.linalg.norm(v_r)
                r1 = np.linalg.norm(op.apply(v_r) - sigma * u_r)
                r2 = np.linalg.norm(op.apply_adjoint(u_r) - sigma * v_r)
                steps += 1
                thr = max(tol * sigma, 64 * np.finfo(float).eps * scale)
                if max(r1, r2) <= thr:
                    return finish(sigma, u_r, v_r, True)
            if beta <= scale * eps_rel:
                invariant = True
                break
            v = r / beta
            if k < dim_cap:
                v_basis[:, k] = v

        if k == 0:
            # operator annihilated the start vector
            if invariant and scale == 0.0:
                fresh_draws += 1
                if fresh_draws >= 3:
                    u0 = np.zeros(m)
                    u0[0] = 1.0
                    return finish(0.0, u0, start_v, True, degenerate=True)
                start_v = _random_unit(rng, n)
                continue
            break

        if left_exhausted:
            # A v_{k+1} fell inside span(U_k): the right subspace grew by one
            # but the left did not, so the exact restriction is rectangular
            sigma, ub, vb = _bidiag_top_rect(alphas, betas)
            kk = len(alphas)
            u_r = u_basis[:, :kk] @ ub
            v_r = v_basis[:, : kk + 1] @ vb
        else:
            sigma, ub, vb, kk = ritz
            u_r = u_basis[:, :kk] @ ub
            v_r = v_basis[:, :kk] @ vb
        u_r /= np.linalg.norm(u_r)
        v_r /= np.linalg.norm(v_r)
        if invariant:
            # Krylov space is invariant, Ritz triplet is exact up to roundoff
            return finish(sigma, u_r, v_r, True, degenerate=(sigma <= scale * eps_rel))
        best = finish(sigma, u_r, v_r, False)
        start_v = v_r

    return best


@dataclass
class TopEigenvalue:
    value: float
    vector: np.ndarray
    converged: bool
    degenerate: bool = False
    iterations: int = 0


def top_eigenvalue(a, tol=1e-8, max_iter=500, seed=0):
    """Dominant eigenvalue of a symmetric operator by power iteration.

    Stops when ``|A v - lam v| <= tol * |lam|``; for symmetric input that
    bounds the eigenvalue error by the same amount.
    """
    op = as_operator(a)
    m, n = op.shape
    if m != n:
        raise ValueError("top_eigenvalue needs a square operator")
    if n <= 0:
        raise ValueError("operator must have positive dimensions")
    rng = np.random.default_rng(seed)
    v = _random_unit(rng, n)
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = op.apply(v)
        lam = float(v @ w)
        res = float(np.linalg.norm(w - lam * v))
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return TopEigenvalue(0.0, v, True, degenerate=True, iterations=it)
        if res <= tol * abs(lam):
            return TopEigenvalue(lam, v, True, iterations=it)
        v = w / nw
    return TopEigenvalue(lam, v, False, iterations=max_iter)

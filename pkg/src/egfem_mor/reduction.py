"""Proper orthogonal decomposition and (matrix) discrete empirical interpolation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import PatternMismatch, RankExceedsData, SingularSelection


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Snapshot matrix ``Y`` (one column per sample) with sample labels."""

    matrix: np.ndarray
    labels: tuple = ()
    kind: str = "solution"

    def __post_init__(self):
        Y = np.asarray(self.matrix, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2 or Y.shape[1] < 1:
            raise RankExceedsData("a snapshot set needs at least one column")
        object.__setattr__(self, "matrix", Y)
        labels = tuple(self.labels) if len(self.labels) else tuple(range(Y.shape[1]))
        if len(labels) != Y.shape[1]:
            raise ValueError("one label per snapshot column is required")
        object.__setattr__(self, "labels", labels)
        if self.kind not in ("solution", "nonlinearity", "matrix_vectorized"):
            raise ValueError(f"unknown snapshot kind {self.kind!r}")

    @property
    def shape(self):
        return self.matrix.shape


def _as_matrix(snapshots):
    if isinstance(snapshots, SnapshotSet):
        return snapshots.matrix
    Y = np.asarray(snapshots, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def fix_signs(U):
    """Flip columns so the entry of largest magnitude (first one on ties) is
    positive."""
    if U.size == 0:
        return U
    idx = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return U * s


def thin_svd(Y, method="svd"):
    """Left singular vectors and singular values of ``Y`` (descending).

    ``method="gram"`` uses the method of snapshots (eigendecomposition of
    ``Y^T Y``), which is cheaper for ``N >> n_s`` but resolves singular values
    only down to about ``sqrt(eps) * sigma_1``.
    """
    if method == "svd":
        try:
            U, s, _ = la.svd(Y, full_matrices=False, lapack_driver="gesdd")
        except la.LinAlgError:
            U, s, _ = la.svd(Y, full_matrices=False, lapack_driver="gesvd")
    elif method == "gram":
        lam, W = la.eigh(Y.T @ Y)
        order = np.argsort(lam)[::-1]
        lam, W = np.clip(lam[order], 0.0, None), W[:, order]
        s = np.sqrt(lam)
        keep = s > s[0] * np.sqrt(np.finfo(float).eps) * max(Y.shape) if len(s) else s > 0
        U = (Y @ W[:, keep]) / s[keep]
        U, _ = np.linalg.qr(U)
        s = s.copy()
        s[~keep] = 0.0
        s = s[: U.shape[1]] if U.shape[1] < len(s) else s
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    return fix_signs(U), s


def numerical_rank(sigma, shape):
    if len(sigma) == 0 or sigma[0] == 0:
        return 0
    tol = sigma[0] * max(shape) * np.finfo(float).eps
    return int(np.sum(sigma > tol))


@dataclass(frozen=True, eq=False)
class PodBasis:
    """Orthonormal reduced basis ``v`` (N x n) with all singular values of the
    snapshot matrix it was built from."""

    v: np.ndarray
    sigma: np.ndarray

    @property
    def n(self):
        return self.v.shape[1]

    @property
    def rank(self):
        return numerical_rank(self.sigma, (self.v.shape[0], len(self.sigma)))

    def truncate(self, n):
        if n > self.n:
            raise RankExceedsData(f"basis has {self.n} modes, {n} requested")
        return PodBasis(self.v[:, :n], self.sigma)

    def project(self, u):
        return self.v.T @ u

    def prolong(self, u_r):
        return self.v @ u_r

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.ones(n))


def energy_rank(sigma, eps):
    """Smallest ``n`` with ``sum_{i<=n} sigma_i^2 >= (1 - eps) sum sigma_i^2``."""
    e = np.cumsum(np.asarray(sigma) ** 2)
    if e[-1] == 0:
        return 1
    return int(np.searchsorted(e, (1.0 - eps) * e[-1] * (1 - 1e-15)) + 1)


def pod(snapshots, rank=None, tol=None, method="svd"):
    """POD basis from a snapshot matrix or :class:`SnapshotSet`.

    Give either ``rank`` (number of modes) or ``tol`` (energy tolerance in
    (0, 1)); with neither, the numerical rank is used.
    """
    Y = _as_matrix(snapshots)
    U, s = thin_svd(Y, method)
    if rank is not None and tol is not None:
        raise ValueError("give rank or tol, not both")
    if tol is not None:
        if not 0.0 < tol < 1.0:
            raise ValueError("energy tolerance must lie in (0, 1)")
        n = energy_rank(s, tol)
    elif rank is not None:
        n = int(rank)
        if n < 1 or n > min(Y.shape) or n > U.shape[1]:
            raise RankExceedsData(f"rank {n} exceeds snapshot data of shape {Y.shape}")
    else:
        n = max(1, numerical_rank(s, Y.shape))
    return PodBasis(U[:, :n].copy(), s.copy())


@dataclass(frozen=True, eq=False)
class DeimOperator:
    """DEIM basis ``v_f``, interpolation indices and ``d_f = v_f (P^T v_f)^-1``."""

    v_f: np.ndarray
    indices: np.ndarray
    d_f: np.ndarray
    sigma: Optional[np.ndarray] = None

    @property
    def n(self):
        return len(self.indices)

    def approximate(self, f_selected):
        """Reconstruct a full vector from its values at ``indices``."""
        return self.d_f @ f_selected

    def reconstruct(self, y):
        return self.d_f @ np.asarray(y)[self.indices]


def deim_indices(V):
    """Greedy interpolation indices for the columns of ``V`` (lowest index wins
    ties)."""
    V = np.asarray(V, dtype=float)
    N, m = V.shape
    tiny = np.finfo(float).eps * max(N, m) * 10
    p = [int(np.argmax(np.abs(V[:, 0])))]
    if abs(V[p[0], 0]) <= tiny:
        raise SingularSelection("first DEIM basis vector vanishes")
    for l in range(1, m):
        A = V[p, :l]
        coef = np.linalg.solve(A, V[p, l])
        r = V[:, l] - V[:, :l] @ coef
        nxt = int(np.argmax(np.abs(r)))
        if abs(r[nxt]) <= tiny:
            raise SingularSelection(
                f"interpolation residual vanishes at step {l + 1}; basis is rank deficient"
            )
        p.append(nxt)
    return np.array(p, dtype=np.int64)


def deim_from_basis(V, sigma=None):
    V = np.asarray(V, dtype=float)
    p = deim_indices(V)
    PV = V[p, :]
    if np.linalg.cond(PV) > 1.0 / (np.finfo(float).eps * 1e3):
        raise SingularSelection("selected rows of the DEIM basis are singular")
    D = la.solve(PV.T, V.T).T
    return DeimOperator(V, p, D, sigma)


def deim(snapshots, n_f):
    """DEIM operator with ``n_f`` modes from nonlinearity snapshots."""
    Y = _as_matrix(snapshots)
    if not 1 <= n_f <= min(Y.shape):
        raise RankExceedsData(f"n_f = {n_f} outside [1, {min(Y.shape)}]")
    U, s = thin_svd(Y)
    if numerical_rank(s, Y.shape) < n_f:
        raise SingularSelection(
            f"snapshot rank {numerical_rank(s, Y.shape)} is smaller than n_f = {n_f}"
        )
    return deim_from_basis(U[:, :n_f].copy(), s.copy())


# MDEIM vectorization ---------------------------------------------------------
@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """Positions ``(rows, cols)`` of a sparse matrix in column-major order."""

    rows: np.ndarray
    cols: np.ndarray
    shape: tuple

    @property
    def nnz(self):
        return len(self.rows)

    @classmethod
    def of(cls, m):
        m = sp.coo_matrix(m)
        order = np.lexsort((m.row, m.col))
        return cls(m.row[order].astype(np.int64), m.col[order].astype(np.int64), m.shape)


def mdeim_pattern(matrices):
    """Union nonzero pattern of a sequence of equally shaped sparse matrices."""
    mats = list(matrices)
    shape = mats[0].shape
    keys = []
    for m in mats:
        if m.shape != shape:
            raise PatternMismatch("matrices differ in shape")
        c = sp.coo_matrix(m)
        keys.append(c.col.astype(np.int64) * shape[0] + c.row)
    key = np.unique(np.concatenate(keys))
    return SparsityPattern(key % shape[0], key // shape[0], shape)


def mdeim_vectorize(m, pattern=None):
    """Column-wise stacking of a matrix.

    Dense input is flattened in column-major order. Sparse input is stacked
    over ``pattern`` (its own nonzero pattern by default).
    """
    if not sp.issparse(m):
        return np.asarray(m, dtype=float).reshape(-1, order="F")
    if pattern is None:
        pattern = SparsityPattern.of(m)
    if m.shape != pattern.shape:
        raise PatternMismatch(f"matrix shape {m.shape} differs from pattern {pattern.shape}")
    m = sp.csc_matrix(m)
    return np.asarray(m[pattern.rows, pattern.cols]).ravel()


def mdeim_unvectorize(v, shape_or_pattern):
    """Inverse of :func:`mdeim_vectorize`; sparse CSC output for a pattern."""
    v = np.asarray(v, dtype=float).ravel()
    if isinstance(shape_or_pattern, SparsityPattern):
        pat = shape_or_pattern
        if len(v) != pat.nnz:
            raise PatternMismatch(f"vector of length {len(v)} does not fit {pat.nnz} pattern entries")
        return sp.csc_matrix((v, (pat.rows, pat.cols)), shape=pat.shape)
    shape = tuple(shape_or_pattern)
    if len(v) != shape[0] * shape[1]:
        raise PatternMismatch(f"vector of length {len(v)} cannot form shape {shape}")
    return v.reshape(shape, order="F")


# persistence -----------------------------------------------------------------
def save_pod(path, basis):
    np.savez(path, v=basis.v, sigma=basis.sigma)


def load_pod(path):
    with np.load(path) as f:
        return PodBasis(f["v"], f["sigma"])


def save_deim(path, op):
    np.savez(path, v_f=op.v_f, indices=op.indices, d_f=op.d_f,
             sigma=op.sigma if op.sigma is not None else np.zeros(0))


def load_deim(path):
    with np.load(path) as f:
        sigma = f["sigma"]
        return DeimOperator(f["v_f"], f["indices"], f["d_f"], sigma if len(sigma) else None)

"""Sparse third-order tensors in coordinate format.

Contractions follow the usual conventions::

    (T . v)[i, j]   = sum_k T[i, j, k] v[k]
    (T : M)[i]      = sum_{j,k} T[i, j, k] M[j, k]
    (T x_1 A)[a, j, k] = sum_i T[i, j, k] A[a, i]     (likewise for modes 2, 3)

Mode products accept a matrix of shape ``(new, N_n)``; a matrix of shape
``(N_n, new)`` is applied transposed, so that mode products with a tall basis
matrix always shrink the tensor.
"""

from __future__ import annotations

import struct

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, MalformedFile

_MAGIC = b"EGT3"
_VERSION = 1


class SparseTensor3:
    """Immutable sparse tensor with canonical (sorted, deduplicated, no
    explicit zeros) coordinate storage."""

    __slots__ = ("dims", "i", "j", "k", "vals")

    def __init__(self, dims, i, j, k, vals, canonical=False):
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 0:
            raise DimensionMismatch(f"invalid tensor dims {dims}")
        i, j, k = (np.asarray(a, dtype=np.int64).ravel() for a in (i, j, k))
        vals = np.asarray(vals, dtype=float).ravel()
        if not (len(i) == len(j) == len(k) == len(vals)):
            raise DimensionMismatch("coordinate arrays differ in length")
        for idx, d in zip((i, j, k), dims):
            if len(idx) and (idx.min() < 0 or idx.max() >= d):
                raise DimensionMismatch("tensor index out of range")
        if not canonical:
            i, j, k, vals = _canonicalize(dims, i, j, k, vals)
        for a in (i, j, k, vals):
            a.setflags(write=False)
        self.dims = dims
        self.i, self.j, self.k, self.vals = i, j, k, vals

    @classmethod
    def from_dense(cls, arr):
        arr = np.asarray(arr, dtype=float)
        i, j, k = np.nonzero(arr)
        return cls(arr.shape, i, j, k, arr[i, j, k])

    @property
    def nnz(self):
        return len(self.vals)

    def entries(self):
        """Iterate over ``(i, j, k, value)`` in canonical order."""
        return zip(self.i.tolist(), self.j.tolist(), self.k.tolist(), self.vals.tolist())

    def todense(self):
        out = np.zeros(self.dims)
        out[self.i, self.j, self.k] = self.vals
        return out

    def __repr__(self):
        return f"SparseTensor3(dims={self.dims}, nnz={self.nnz})"

    def allclose(self, other, rtol=1e-12, atol=0.0):
        if self.dims != other.dims:
            return False
        return np.allclose(self.todense(), other.todense(), rtol=rtol, atol=atol)


def _canonicalize(dims, i, j, k, vals):
    n2, n3 = dims[1], dims[2]
    key = (i * n2 + j) * n3 + k
    order = np.argsort(key, kind="stable")
    key, vals = key[order], vals[order]
    if len(key):
        start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        vals = np.add.reduceat(vals, start)
        key = key[start]
    nz = vals != 0.0
    key, vals = key[nz], vals[nz]
    k = key % n3 if n3 else key
    ij = key // n3 if n3 else key
    j = ij % n2 if n2 else ij
    i = ij // n2 if n2 else ij
    return i, j, k, vals


def contract1(t, v):
    """Single contraction over the third index; returns a CSR matrix."""
    return contract_mode(t, v, 3)


def contract_mode(t, v, mode):
    """Contract index ``mode`` (1, 2 or 3) with vector ``v``.

    The two remaining indices keep their order; the result is CSR.
    """
    v = np.asarray(v, dtype=float).ravel()
    if mode not in (1, 2, 3):
        raise DimensionMismatch(f"mode must be 1, 2 or 3, got {mode}")
    if len(v) != t.dims[mode - 1]:
        raise DimensionMismatch(
            f"vector of length {len(v)} cannot contract mode {mode} of dims {t.dims}"
        )
    idx = (t.i, t.j, t.k)
    keep = [m for m in range(3) if m != mode - 1]
    rows, cols = idx[keep[0]], idx[keep[1]]
    shape = (t.dims[keep[0]], t.dims[keep[1]])
    return sp.csr_matrix((t.vals * v[idx[mode - 1]], (rows, cols)), shape=shape)


def contract2(t, m):
    """Double contraction ``T : M`` with a dense or sparse (N2, N3) matrix."""
    if m.shape != (t.dims[1], t.dims[2]):
        raise DimensionMismatch(
            f"matrix of shape {m.shape} cannot double-contract dims {t.dims}"
        )
    if sp.issparse(m):
        mjk = np.asarray(m.tocsr()[t.j, t.k]).ravel()
    else:
        mjk = np.asarray(m)[t.j, t.k]
    return np.bincount(t.i, weights=t.vals * mjk, minlength=t.dims[0])


def contract2_outer(t, v, w):
    """``T : (v (x) w)`` without forming the outer product."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if len(v) != t.dims[1] or len(w) != t.dims[2]:
        raise DimensionMismatch("outer-product factors do not match tensor dims")
    return np.bincount(t.i, weights=t.vals * v[t.j] * w[t.k], minlength=t.dims[0])


def outer(v, w):
    """Tensor product of two vectors, ``[v (x) w]_{ij} = v_i w_j``."""
    return np.multiply.outer(np.asarray(v, dtype=float), np.asarray(w, dtype=float))


def mode_product(t, a, n):
    """n-mode product ``T x_n A`` (``n`` in 1, 2, 3).

    ``a`` of shape ``(new, N_n)`` is used as is; shape ``(N_n, new)`` is
    transposed first. Square matrices are always used as given.
    """
    if n not in (1, 2, 3):
        raise DimensionMismatch(f"mode must be 1, 2 or 3, got {n}")
    dn = t.dims[n - 1]
    dense = not sp.issparse(a)
    a = np.asarray(a, dtype=float) if dense else a.tocsr()
    if a.ndim != 2:
        raise DimensionMismatch("mode product needs a matrix")
    if a.shape[1] != dn:
        if a.shape[0] == dn:
            a = a.T
        else:
            raise DimensionMismatch(f"matrix of shape {a.shape} does not fit mode {n} of {t.dims}")
    new = a.shape[0]
    idx = [t.i, t.j, t.k]
    others = [m for m in range(3) if m != n - 1]
    d_o = [t.dims[m] for m in others]
    col_key = idx[others[0]] * d_o[1] + idx[others[1]]
    ucols, col_pos = np.unique(col_key, return_inverse=True)
    unfold = sp.csc_matrix((t.vals, (idx[n - 1], col_pos)), shape=(dn, len(ucols)))
    prod = a @ unfold
    prod = sp.coo_matrix(prod)
    rows, cpos, vals = prod.row, prod.col, prod.data
    ck = ucols[cpos]
    o0, o1 = ck // d_o[1], ck % d_o[1]
    out_idx = [None, None, None]
    out_idx[n - 1] = rows
    out_idx[others[0]] = o0
    out_idx[others[1]] = o1
    dims = list(t.dims)
    dims[n - 1] = new
    return SparseTensor3(dims, *out_idx, vals)


def dump(t, path):
    """Write ``t`` in the little-endian binary tensor format.

    Layout: ``b"EGT3"``, uint32 version, 3 x uint64 dims, uint64 nnz, then
    int64 arrays i, j, k and a float64 array of values, each of length nnz.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I3QQ", _VERSION, *t.dims, t.nnz))
        for a in (t.i, t.j, t.k):
            fh.write(a.astype("<i8").tobytes())
        fh.write(t.vals.astype("<f8").tobytes())


def load(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise MalformedFile("not a tensor file")
    head = struct.calcsize("<I3QQ")
    version, d1, d2, d3, nnz = struct.unpack("<I3QQ", data[4:4 + head])
    if version != _VERSION:
        raise MalformedFile(f"unsupported tensor file version {version}")
    off = 4 + head
    if len(data) != off + 32 * nnz:
        raise MalformedFile("tensor file truncated")
    arrs = []
    for dt in ("<i8", "<i8", "<i8", "<f8"):
        arrs.append(np.frombuffer(data, dtype=dt, count=nnz, offset=off).copy())
        off += 8 * nnz
    return SparseTensor3((d1, d2, d3), *arrs, canonical=True)

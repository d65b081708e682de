"""Finite element integration for P1 solution spaces.

Covers the standard Galerkin forms (nonlinear stiffness, reaction load and the
derivative-tested convection load), the constant mass/stiffness matrices, and
the precomputed group operators of the (extended) group finite element
method: the stiffness tensor, the coefficient-to-load matrices and the
trilinear convection tensor.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameter, MeshMismatch, NonFiniteValue
from .meshfe.quadrature import triangle_rule
from .meshfe.space import ElementGeometry, basis_values, build_interpolation, same_mesh
from .tensor3 import SparseTensor3

NONLINEAR_ORDER = 4


@dataclass(frozen=True)
class Coefficient:
    """Point-wise coefficient ``f(x, u, grad u; tau)`` with its partials.

    ``value``, ``d_u`` take ``(x (..., 2), u (...), g (..., 2), tau)`` and
    return arrays shaped like ``u``; ``d_g`` returns shape ``(..., 2)``.
    A coefficient with ``constant`` set is the constant function.
    """

    name: str
    value: Callable
    d_u: Optional[Callable] = None
    d_g: Optional[Callable] = None
    uses_grad: bool = False
    constant: Optional[float] = None
    vanishes_at_zero: bool = False

    @classmethod
    def const(cls, v, name="const"):
        v = float(v)
        return cls(
            name,
            lambda x, u, g, tau: np.full(np.shape(u), v),
            lambda x, u, g, tau: np.zeros(np.shape(u)),
            constant=v,
            vanishes_at_zero=(v == 0.0),
        )

    def partials(self, x, u, g, tau):
        du = self.d_u(x, u, g, tau) if self.d_u is not None else np.zeros(np.shape(u))
        dg = self.d_g(x, u, g, tau) if (self.uses_grad and self.d_g is not None) else None
        return du, dg


@dataclass(frozen=True)
class ProblemDefinition:
    """Data of ``-div(a grad u) + c + s_d * m(d) = q`` with ``u = 0`` on the
    boundary, where ``m(d)`` tests ``d`` against ``dx1 phi + dx2 phi``.

    For time-dependent problems ``E du/dt`` is added and ``tau`` is the time.
    """

    name: str
    a: Coefficient
    q: Callable
    c: Optional[Coefficient] = None
    d: Optional[Coefficient] = None
    d_scale: float = 1.0
    param_domain: Optional[np.ndarray] = None
    time_dependent: bool = False
    t_span: Optional[tuple] = None
    u0: Optional[Callable] = None
    meta: dict = field(default_factory=dict)


class SgaTerms(NamedTuple):
    K: Optional[sp.spmatrix]
    l: Optional[np.ndarray]
    dK: Optional[sp.spmatrix]
    dl: Optional[sp.spmatrix]


def check_finite(name, *arrays):
    for a in arrays:
        if a is None:
            continue
        data = a.data if sp.issparse(a) else a
        if not np.all(np.isfinite(data)):
            raise NonFiniteValue(f"non-finite values in {name}")


class ElementAssembler:
    """Scatter of element contributions into free-dof vectors and matrices.

    Matrices share the element-connectivity pattern, stored CSC with sorted
    row indices; the data array of an assembled matrix is therefore its
    column-wise vectorization restricted to the pattern. Summation happens in
    element order, so results are bitwise reproducible.
    """

    def __init__(self, space, order=NONLINEAR_ORDER):
        if space.degree != 1:
            raise InvalidParameter("solution space must be P1")
        self.space = space
        self.geo = ElementGeometry(space.mesh)
        self.lam, self.w = triangle_rule(order)
        self.xq = self.geo.map_points(self.lam)
        self.tris = space.mesh.triangles
        fi = space.free_index[self.tris]
        self.loc = fi
        self.n = space.n_free
        self.vkeep = fi >= 0
        r = np.broadcast_to(fi[:, :, None], (len(fi), 3, 3))
        c = np.broadcast_to(fi[:, None, :], (len(fi), 3, 3))
        self.mkeep = ((r >= 0) & (c >= 0)).ravel()
        rk, ck = r.ravel()[self.mkeep], c.ravel()[self.mkeep]
        key = ck * self.n + rk
        ukey, self.mpos = np.unique(key, return_inverse=True)
        self.rows = ukey % self.n
        self.cols = ukey // self.n
        self.nnz = len(ukey)
        self.indptr = np.searchsorted(self.cols, np.arange(self.n + 1))
        self.indices = self.rows.astype(np.int32)
        ga = self.geo.grad
        self.stiff_el = self.geo.area[:, None, None] * np.einsum("tid,tjd->tij", ga, ga)
        self.dtest = ga[:, :, 0] + ga[:, :, 1]

    # scatter -----------------------------------------------------------------
    def vector(self, el):
        return np.bincount(self.loc[self.vkeep], weights=el[self.vkeep], minlength=self.n)

    def matrix(self, el):
        data = np.bincount(self.mpos, weights=el.reshape(-1)[self.mkeep], minlength=self.nnz)
        return sp.csc_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def pattern_data(self, el):
        return np.bincount(self.mpos, weights=el.reshape(-1)[self.mkeep], minlength=self.nnz)

    # state at quadrature points ----------------------------------------------
    def element_values(self, u):
        full = np.zeros(self.space.n_dofs)
        full[self.space.free_dofs] = u
        return full[self.tris]

    def state(self, u):
        u_el = self.element_values(u)
        uq = u_el @ self.lam.T
        g = np.einsum("tmd,tm->td", self.geo.grad, u_el)
        gq = np.broadcast_to(g[:, None, :], uq.shape + (2,))
        return u_el, uq, gq

    def weighted_partials(self, coef, uq, gq, tau):
        """``sum_q w_q (df/du lam_qm + df/dg . grad lam_m)`` per element, (T, 3),
        as used for derivatives of element-averaged coefficients."""
        du, dg = coef.partials(self.xq, uq, gq, tau)
        out = (du * self.w) @ self.lam
        if dg is not None:
            out = out + np.einsum("tqd,q,tmd->tm", dg, self.w, self.geo.grad)
        return out


_ASSEMBLERS = weakref.WeakKeyDictionary()


def element_assembler(space):
    asm = _ASSEMBLERS.get(space)
    if asm is None:
        asm = ElementAssembler(space)
        _ASSEMBLERS[space] = asm
    return asm


def assemble_linear(space):
    """Mass matrix ``E`` and stiffness matrix ``K`` on the free dofs (CSC)."""
    asm = element_assembler(space)
    lam, w = triangle_rule(2)
    mass_ref = np.einsum("q,qi,qj->ij", w, lam, lam)
    E = asm.matrix(asm.geo.area[:, None, None] * mass_ref)
    K = asm.matrix(asm.stiff_el)
    return E, K


def assemble_source(space, q_fn, tau=None, order=NONLINEAR_ORDER):
    """Load vector ``[q]_i = int q phi_i`` over the free dofs."""
    asm = element_assembler(space)
    if order == NONLINEAR_ORDER:
        lam, w, xq = asm.lam, asm.w, asm.xq
    else:
        lam, w = triangle_rule(order)
        xq = asm.geo.map_points(lam)
    qv = np.broadcast_to(q_fn(xq, tau), xq.shape[:2])
    el = asm.geo.area[:, None] * ((qv * w) @ lam)
    out = asm.vector(el)
    check_finite("source", out)
    return out


def assemble_sga_nonlinear(space, problem, u, tau=None, jacobian=True):
    """Nonlinear stiffness ``K(a, u)`` and reaction load ``l(c, u)`` by
    fourth-order quadrature, with analytic derivatives of ``K(a, u) u`` and
    ``l(c, u)`` with respect to ``u``.

    Terms absent from ``problem`` come back as ``None``.
    """
    asm = element_assembler(space)
    area = asm.geo.area
    u_el, uq, gq = asm.state(u)
    a = problem.a
    K = dK = l = dl = None
    if a.constant is not None:
        K = asm.matrix(a.constant * asm.stiff_el)
        dK = K if jacobian else None
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            av = a.value(asm.xq, uq, gq, tau)
            abar = av @ asm.w
            K_el = abar[:, None, None] * asm.stiff_el
            K = asm.matrix(K_el)
            if jacobian:
                dab = asm.weighted_partials(a, uq, gq, tau)
                su = np.einsum("tij,tj->ti", asm.stiff_el, u_el)
                dK = asm.matrix(K_el + su[:, :, None] * dab[:, None, :])
    if problem.c is not None:
        c = problem.c
        with np.errstate(over="ignore", invalid="ignore"):
            cv = c.value(asm.xq, uq, gq, tau)
            l = asm.vector(area[:, None] * ((cv * asm.w) @ asm.lam))
            if jacobian:
                du, dg = c.partials(asm.xq, uq, gq, tau)
                el = np.einsum("tq,qi,qm->tim", du * asm.w, asm.lam, asm.lam)
                if dg is not None:
                    el = el + np.einsum(
                        "tqd,q,qi,tmd->tim", dg, asm.w, asm.lam, asm.geo.grad
                    )
                dl = asm.matrix(area[:, None, None] * el)
    check_finite("SGA nonlinear terms", K, l, dK, dl)
    return SgaTerms(K, l, dK, dl)


def assemble_derivative_load(space, d_coef, u, tau=None, jacobian=False):
    """Load ``[m]_i = int d(u_h) (dx1 phi_i + dx2 phi_i)`` by fourth-order
    quadrature; with ``jacobian=True`` also returns ``dm/du``."""
    asm = element_assembler(space)
    area = asm.geo.area
    _, uq, gq = asm.state(u)
    with np.errstate(over="ignore", invalid="ignore"):
        dv = d_coef.value(asm.xq, uq, gq, tau)
        dbar = dv @ asm.w
        m = asm.vector(area[:, None] * asm.dtest * dbar[:, None])
        check_finite("derivative load", m)
        if not jacobian:
            return m
        part = asm.weighted_partials(d_coef, uq, gq, tau)
        dm = asm.matrix(area[:, None, None] * asm.dtest[:, :, None] * part[:, None, :])
    check_finite("derivative load Jacobian", dm)
    return m, dm


# group operators -------------------------------------------------------------
def _check_pair(space_v, space_w):
    if space_v.degree != 1:
        raise InvalidParameter("solution space must be P1")
    if not same_mesh(space_v.mesh, space_w.mesh):
        raise MeshMismatch("solution and coefficient spaces live on different meshes")


def _w_values(space_w, order):
    lam, w = triangle_rule(order)
    return lam, w, basis_values(space_w.degree, lam)


def assemble_stiffness_tensor(space_v, space_w):
    """``[K^a]_{ijk} = int eta_k grad phi_j . grad phi_i`` of dims
    ``(N_u, N_u, N_a)``, integrated exactly."""
    _check_pair(space_v, space_w)
    asm = element_assembler(space_v)
    _, w, eta = _w_values(space_w, max(1, space_w.degree))
    avg = w @ eta  # (nloc,)
    fv = asm.loc
    fw = space_w.free_index[space_w.elem_dofs]
    nt, nw = fw.shape
    vals = asm.stiff_el[:, :, :, None] * avg[None, None, None, :]
    I = np.broadcast_to(fv[:, :, None, None], vals.shape)
    J = np.broadcast_to(fv[:, None, :, None], vals.shape)
    Kk = np.broadcast_to(fw[:, None, None, :], vals.shape)
    keep = ((I >= 0) & (J >= 0) & (Kk >= 0)).ravel()
    return SparseTensor3(
        (space_v.n_free, space_v.n_free, space_w.n_free),
        I.ravel()[keep], J.ravel()[keep], Kk.ravel()[keep], vals.ravel()[keep],
    )


def assemble_group_matrix(space_v, space_w, test="value"):
    """Coefficient-to-load matrix over free dofs, shape ``(N_u, N_f)``.

    ``test="value"`` gives ``int eta_j phi_i``; ``test="derivative"`` gives
    ``int eta_j (dx1 phi_i + dx2 phi_i)``.
    """
    _check_pair(space_v, space_w)
    asm = element_assembler(space_v)
    area = asm.geo.area
    if test == "value":
        lam, w, eta = _w_values(space_w, space_w.degree + 1)
        loc = np.einsum("q,qi,qj->ij", w, lam, eta)
        vals = area[:, None, None] * loc[None]
    elif test == "derivative":
        _, w, eta = _w_values(space_w, max(1, space_w.degree))
        avg = w @ eta
        vals = area[:, None, None] * asm.dtest[:, :, None] * avg[None, None, :]
    else:
        raise InvalidParameter(f"unknown test kind {test!r}")
    fv = asm.loc
    fw = space_w.free_index[space_w.elem_dofs]
    I = np.broadcast_to(fv[:, :, None], vals.shape).ravel()
    J = np.broadcast_to(fw[:, None, :], vals.shape).ravel()
    keep = (I >= 0) & (J >= 0)
    m = sp.csr_matrix(
        (vals.ravel()[keep], (I[keep], J[keep])), shape=(space_v.n_free, space_w.n_free)
    )
    m.sum_duplicates()
    return m


def assemble_ml_tensor(space_v):
    """``[M]_{ijk} = int phi_k phi_j (dx1 phi_i + dx2 phi_i)`` over free dofs."""
    asm = element_assembler(space_v)
    lam, w = triangle_rule(2)
    mloc = np.einsum("q,qj,qk->jk", w, lam, lam)
    vals = asm.geo.area[:, None, None, None] * asm.dtest[:, :, None, None] * mloc[None, None]
    fv = asm.loc
    shape = vals.shape
    I = np.broadcast_to(fv[:, :, None, None], shape).ravel()
    J = np.broadcast_to(fv[:, None, :, None], shape).ravel()
    Kk = np.broadcast_to(fv[:, None, None, :], shape).ravel()
    keep = (I >= 0) & (J >= 0) & (Kk >= 0)
    n = space_v.n_free
    return SparseTensor3((n, n, n), I[keep], J[keep], Kk[keep], vals.ravel()[keep])


@dataclass(frozen=True, eq=False)
class GroupOperators:
    k_a: Optional[SparseTensor3] = None
    l_c: Optional[sp.csr_matrix] = None
    m_c: Optional[sp.csr_matrix] = None
    ml: Optional[SparseTensor3] = None
    ops_a: object = None
    ops_c: object = None


def assemble_group(space_v, space_w_a=None, space_w_c=None, variant="standard"):
    """Precomputed operators of the group formulation.

    ``standard``: stiffness tensor on ``space_w_a`` and the value-tested
    matrix on ``space_w_c``. ``derivative_test``: the derivative-tested
    matrix on ``space_w_c``. ``ml_tensor``: the trilinear tensor on
    ``space_v`` alone.
    """
    if variant == "ml_tensor":
        return GroupOperators(ml=assemble_ml_tensor(space_v))
    k_a = ops_a = l_c = m_c = ops_c = None
    if variant not in ("standard", "derivative_test"):
        raise InvalidParameter(f"unknown group variant {variant!r}")
    if space_w_a is not None:
        k_a = assemble_stiffness_tensor(space_v, space_w_a)
        ops_a = build_interpolation(space_v, space_w_a)
    if space_w_c is not None:
        test = "value" if variant == "standard" else "derivative"
        mat = assemble_group_matrix(space_v, space_w_c, test)
        if variant == "standard":
            l_c = mat
        else:
            m_c = mat
        ops_c = build_interpolation(space_v, space_w_c)
    return GroupOperators(k_a=k_a, l_c=l_c, m_c=m_c, ops_a=ops_a, ops_c=ops_c)


def eval_point_nonlinearity(ops, coef, u, tau=None, jacobian=True):
    """Coefficient values at the interpolation points and their Jacobian
    ``diag(df/du) Pi_u + sum_m diag(df/dg_m) Pi_grad_m`` (CSR)."""
    uw, gw = ops.apply(u)
    with np.errstate(over="ignore", invalid="ignore"):
        f = coef.value(ops.points, uw, gw, tau)
        f = np.broadcast_to(f, uw.shape).astype(float)
        if not jacobian:
            check_finite(f"coefficient {coef.name}", f)
            return f, None
        du, dg = coef.partials(ops.points, uw, gw, tau)
    df = sp.diags(du) @ ops.pi_u
    if dg is not None:
        for m in range(2):
            df = df + sp.diags(dg[:, m]) @ ops.pi_grad[m]
    df = sp.csr_matrix(df)
    check_finite(f"coefficient {coef.name}", f, df)
    return f, df

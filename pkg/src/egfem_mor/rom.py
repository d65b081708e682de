"""Reduced-order models built from a full-order model and a POD basis.

Five variants are provided:

``SGA_ROM``      Galerkin projection of the quadrature-assembled residual.
``EGFEM_ROM``    Galerkin projection of the group formulation, with the
                 coefficient-to-load and interpolation operators projected.
``SGA_CROM``     (M)DEIM approximation of ``K(a, u)``, ``l(c, u)`` and
                 ``m(d, u)`` from entries computed by masked assembly.
``EGFEM_CROM``   DEIM approximation of the coefficient vectors, evaluated at
                 the selected interpolation points only.
``MLSGA_ROM``    Exact reduction of the trilinear convection tensor.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp

from .assembly import check_finite, element_assembler
from .errors import InvalidParameter, MissingDeim, ShapeMismatch
from .fom import GroupModel, MlsgaModel, SgaModel
from .tensor3 import contract1, contract_mode

log = logging.getLogger(__name__)

FORMULATIONS = ("SGA_ROM", "EGFEM_ROM", "SGA_CROM", "EGFEM_CROM", "MLSGA_ROM")


class MaskedAssembler:
    """Assemble selected entries of one nonlinear SGA term.

    ``kind`` is ``"K"`` (positions in the CSC pattern of the stiffness
    matrix), ``"l"`` (reaction load, dof indices) or ``"m"`` (derivative-tested
    load, dof indices). Only elements supporting a selected entry are visited,
    and values are summed in the same order as the full assembly, so the
    selected entries agree with it bit for bit.
    """

    def __init__(self, space, coef, selected, kind):
        asm = element_assembler(space)
        self.kind = kind
        self.coef = coef
        selected = np.asarray(selected, dtype=np.int64)
        self.n_sel = len(selected)
        if kind == "K":
            pos = -np.ones(asm.mkeep.size, dtype=np.int64)
            pos[asm.mkeep] = asm.mpos
            lookup = -np.ones(asm.nnz, dtype=np.int64)
            lookup[selected] = np.arange(self.n_sel)
            sel = np.where(pos >= 0, lookup[np.maximum(pos, 0)], -1)
            flat = np.flatnonzero(sel >= 0)
            t, r = flat // 9, flat % 9
            self.pair_local = np.column_stack([r // 3, r % 3])
        elif kind in ("l", "m"):
            lookup = -np.ones(asm.n, dtype=np.int64)
            lookup[selected] = np.arange(self.n_sel)
            sel = np.where(asm.loc >= 0, lookup[np.maximum(asm.loc, 0)], -1).ravel()
            flat = np.flatnonzero(sel >= 0)
            t = flat // 3
            self.pair_local = (flat % 3)[:, None]
        else:
            raise InvalidParameter(f"unknown masked term {kind!r}")
        self.pair_sel = sel[flat]
        self.elements, self.pair_elem = np.unique(t, return_inverse=True)
        e = self.elements
        self.lam, self.w = asm.lam, asm.w
        self.xq = asm.xq[e]
        self.grad = asm.geo.grad[e]
        self.area = asm.geo.area[e]
        self.stiff_el = asm.stiff_el[e]
        self.dtest = asm.dtest[e]
        self.loc = asm.loc[e]
        self.n_free = asm.n
        self.agg = sp.csr_matrix(
            (np.ones(len(self.pair_sel)), (self.pair_sel, np.arange(len(self.pair_sel)))),
            shape=(self.n_sel, len(self.pair_sel)),
        )

    @property
    def n_elements(self):
        return len(self.elements)

    def local_values(self, u):
        """Element vertex values of the full free-dof vector ``u``."""
        full = np.append(np.asarray(u, dtype=float), 0.0)
        return full[self.loc]  # index -1 picks the appended zero

    def local_basis(self, v):
        """Per-element rows of the basis ``v`` (zero at boundary vertices)."""
        vz = np.vstack([v, np.zeros((1, v.shape[1]))])
        return vz[self.loc]  # (nE, 3, n)

    def evaluate(self, u_el, tau=None, jacobian=False):
        """Selected entries, and with ``jacobian`` their derivatives with
        respect to the element vertex values, shape (n_pairs, 3)."""
        uq = u_el @ self.lam.T
        g = np.einsum("tmd,tm->td", self.grad, u_el)
        gq = np.broadcast_to(g[:, None, :], uq.shape + (2,))
        pe = self.pair_elem
        with np.errstate(over="ignore", invalid="ignore"):
            fv = self.coef.value(self.xq, uq, gq, tau)
            if self.kind == "K":
                fbar = fv @ self.w
                el = fbar[:, None, None] * self.stiff_el
                pv = el[pe, self.pair_local[:, 0], self.pair_local[:, 1]]
            elif self.kind == "l":
                el = self.area[:, None] * ((fv * self.w) @ self.lam)
                pv = el[pe, self.pair_local[:, 0]]
            else:
                fbar = fv @ self.w
                el = self.area[:, None] * self.dtest * fbar[:, None]
                pv = el[pe, self.pair_local[:, 0]]
            vals = np.bincount(self.pair_sel, weights=pv, minlength=self.n_sel)
            if not jacobian:
                check_finite("masked assembly", vals)
                return vals, None
            du, dg = self.coef.partials(self.xq, uq, gq, tau)
            if self.kind == "l":
                d_el = np.einsum("tq,qi,qm->tim", du * self.w, self.lam, self.lam)
                if dg is not None:
                    d_el = d_el + np.einsum("tqd,q,qi,tmd->tim", dg, self.w, self.lam, self.grad)
                d_el = self.area[:, None, None] * d_el
                pd = d_el[pe, self.pair_local[:, 0]]
            else:
                part = (du * self.w) @ self.lam
                if dg is not None:
                    part = part + np.einsum("tqd,q,tmd->tm", dg, self.w, self.grad)
                if self.kind == "K":
                    coefp = self.stiff_el[pe, self.pair_local[:, 0], self.pair_local[:, 1]]
                else:
                    coefp = self.area[pe] * self.dtest[pe, self.pair_local[:, 0]]
                pd = coefp[:, None] * part[pe]
        check_finite("masked assembly", vals, pd)
        return vals, pd

    def reduced_jacobian(self, pd, v_loc):
        """Derivatives of the selected entries with respect to reduced
        coordinates, given per-element basis rows ``v_loc`` (nE, 3, n)."""
        contrib = np.einsum("pm,pmk->pk", pd, v_loc[self.pair_elem])
        return self.agg @ contrib


def masked_assemble(space, problem, selected, u, tau=None, term="l"):
    """Selected entries of ``K(a, u)`` (pattern positions, ``term="K"``),
    ``l(c, u)`` (``"l"``) or ``m(d, u)`` (``"m"``)."""
    coef = {"K": problem.a, "l": problem.c, "m": problem.d}[term]
    if coef is None:
        raise InvalidParameter(f"problem has no coefficient for term {term!r}")
    ma = MaskedAssembler(space, coef, selected, term)
    vals, _ = ma.evaluate(ma.local_values(u), tau)
    return vals


def _point_eval(coef, points, puv, pgv, u_r, tau):
    """Coefficient values at points and their derivative with respect to the
    reduced coordinates, from projected interpolation operators."""
    uw = puv @ u_r
    gw = np.column_stack([g @ u_r for g in pgv])
    with np.errstate(over="ignore", invalid="ignore"):
        f = np.broadcast_to(coef.value(points, uw, gw, tau), uw.shape).astype(float)
        du, dg = coef.partials(points, uw, gw, tau)
    df = du[:, None] * puv
    if dg is not None:
        df = df + dg[:, 0, None] * pgv[0] + dg[:, 1, None] * pgv[1]
    check_finite(f"coefficient {coef.name}", f, df)
    return f, df


class ReducedModel:
    """Common reduced operators and the time-stepping interface.

    Attributes
    ----------
    formulation : str
    v_u : PodBasis
    deim_ops : dict
        Term name to :class:`DeimOperator` (cROM variants).
    projected : dict
        Precomputed dense reduced operators.
    full_refs : FullOrderModel
        Source of the parts still evaluated in full dimension (load vector,
        and for ``SGA_ROM`` the whole residual).
    """

    formulation = ""

    def __init__(self, pod, fom, deim_ops=None):
        v = np.asarray(pod.v, dtype=float)
        if v.shape[0] != fom.n:
            raise ShapeMismatch(f"basis has {v.shape[0]} rows, model has {fom.n} dofs")
        self.v_u = pod
        self.v = v
        self.full_refs = fom
        self.deim_ops = dict(deim_ops or {})
        self.projected = {
            "E_r": v.T @ (fom.E @ v),
            "K_r": v.T @ (fom.K @ v),
        }
        self._q_cache = None

    @property
    def n(self):
        return self.v.shape[1]

    @property
    def mass(self):
        return self.projected["E_r"]

    def source(self, tau=None):
        key = None if tau is None else np.asarray(tau, dtype=float).tobytes()
        cached = self._q_cache
        if cached is None or cached[0] != key:
            cached = (key, self.v.T @ self.full_refs.source(tau))
            self._q_cache = cached
        return cached[1]

    def prolong(self, u_r):
        return self.v @ u_r

    def restrict(self, u):
        return self.v.T @ u

    def initial_value(self):
        return self.restrict(self.full_refs.initial_value())

    def rhs(self, u_r, tau):
        return -self.residual(u_r, tau)

    def rhs_jacobian(self, u_r, tau):
        return -self.jacobian(u_r, tau)

    def _require(self, names):
        for nm in names:
            if nm not in self.deim_ops:
                raise MissingDeim(f"{self.formulation} needs a DEIM operator for {nm!r}")
            op = self.deim_ops[nm]
            if op.n < self.n:
                log.warning(
                    "DEIM dimension %d for %r is below the POD dimension %d; "
                    "the reduced model may be unstable", op.n, nm, self.n,
                )

    def save(self, path):
        """Store the dense reduced blocks and DEIM index sets (``.npz``)."""
        blocks = {f"projected_{k}": np.asarray(val) for k, val in self.projected.items()}
        for nm, op in self.deim_ops.items():
            blocks[f"deim_{nm}_indices"] = op.indices
            blocks[f"deim_{nm}_d_f"] = op.d_f
        np.savez(path, formulation=np.array(self.formulation), v_u=self.v,
                 sigma=self.v_u.sigma, **blocks)


class SgaRom(ReducedModel):
    formulation = "SGA_ROM"

    def residual(self, u_r, tau=None):
        return self.v.T @ self.full_refs.residual(self.v @ u_r, tau)

    def jacobian(self, u_r, tau=None):
        J = self.full_refs.jacobian(self.v @ u_r, tau)
        return self.v.T @ (J @ self.v)


class _GroupTerms:
    """Reduced coefficient-to-load parts shared by the group ROM variants.

    For each term the coefficient is evaluated at ``points`` from
    ``puv = P^T Pi_u V`` (and ``pgv``) and mapped to the reduced load by
    ``load`` (n x n_points).
    """

    def __init__(self, fom, v, names, select):
        self.terms = {}
        for nm in names:
            ops, D = select(nm)
            puv = np.asarray((ops.pi_u @ v))
            coef = fom.coefs[nm]
            pgv = tuple(np.asarray(g @ v) for g in ops.pi_grad) if coef.uses_grad else (
                np.zeros_like(puv), np.zeros_like(puv))
            entry = {"coef": coef, "points": ops.points, "puv": puv, "pgv": pgv}
            if nm == "c":
                op = fom.l_c
                entry["load"] = v.T @ (op @ D if D is not None else op)
            elif nm == "d":
                op = fom.m_d
                entry["load"] = fom.problem.d_scale * (v.T @ (op @ D if D is not None else op))
            self.terms[nm] = entry

    def add(self, r, J, u_r, tau, names=("c", "d")):
        for nm in names:
            if nm not in self.terms:
                continue
            e = self.terms[nm]
            f, df = _point_eval(e["coef"], e["points"], e["puv"], e["pgv"], u_r, tau)
            r = r + e["load"] @ f
            if J is not None:
                J = J + e["load"] @ df
        return r, J

    def coefficient(self, nm, u_r, tau):
        e = self.terms[nm]
        return _point_eval(e["coef"], e["points"], e["puv"], e["pgv"], u_r, tau)


class EgfemRom(ReducedModel):
    formulation = "EGFEM_ROM"

    def __init__(self, pod, fom, deim_ops=None):
        if not isinstance(fom, GroupModel):
            raise InvalidParameter("EGFEM_ROM needs a group full-order model")
        super().__init__(pod, fom, deim_ops)
        names = fom.nonlinear_terms
        self.group = _GroupTerms(fom, self.v, names, lambda nm: (fom.ops[nm], None))
        for nm, e in self.group.terms.items():
            if "load" in e:
                self.projected[f"load_{nm}"] = e["load"]
            self.projected[f"pi_u_{nm}"] = e["puv"]

    def _eval(self, u_r, tau, jacobian):
        fom = self.full_refs
        v = self.v
        J = None
        if fom.a0 is not None:
            r = fom.a0 * (self.projected["K_r"] @ u_r)
            J = fom.a0 * self.projected["K_r"] if jacobian else None
        else:
            a_vec, da = self.group.coefficient("a", u_r, tau)
            S = contract1(fom.k_a, a_vec)
            u = v @ u_r
            r = v.T @ (S @ u)
            if jacobian:
                B = contract_mode(fom.k_a, u, 2)
                J = v.T @ (S @ v) + v.T @ (B @ da)
        r, J = self.group.add(r, J, u_r, tau)
        return r - self.source(tau), J

    def residual(self, u_r, tau=None):
        return self._eval(u_r, tau, False)[0]

    def jacobian(self, u_r, tau=None):
        return self._eval(u_r, tau, True)[1]


class EgfemCrom(ReducedModel):
    formulation = "EGFEM_CROM"

    def __init__(self, pod, fom, deim_ops=None):
        if not isinstance(fom, GroupModel):
            raise InvalidParameter("EGFEM_CROM needs a group full-order model")
        super().__init__(pod, fom, deim_ops)
        names = fom.nonlinear_terms
        self._require(names)
        v = self.v

        def select(nm):
            op = self.deim_ops[nm]
            return fom.ops[nm].restrict(op.indices), op.d_f

        self.group = _GroupTerms(fom, v, names, select)
        if "a" in names:
            D = self.deim_ops["a"].d_f
            ka = np.empty((self.n, self.n, D.shape[1]))
            for k in range(D.shape[1]):
                ka[:, :, k] = v.T @ (contract1(fom.k_a, D[:, k]) @ v)
            self.projected["K_a_r"] = ka
            self._ka_t = np.ascontiguousarray(ka.transpose(0, 2, 1))
        for nm, e in self.group.terms.items():
            if "load" in e:
                self.projected[f"load_{nm}"] = e["load"]
            self.projected[f"pi_u_{nm}"] = e["puv"]

    def _eval(self, u_r, tau, jacobian):
        fom = self.full_refs
        J = None
        if fom.a0 is not None:
            r = fom.a0 * (self.projected["K_r"] @ u_r)
            J = fom.a0 * self.projected["K_r"] if jacobian else None
        else:
            a_hat, da = self.group.coefficient("a", u_r, tau)
            Ka = self.projected["K_a_r"] @ a_hat
            r = Ka @ u_r
            if jacobian:
                J = Ka + (self._ka_t @ u_r) @ da
        r, J = self.group.add(r, J, u_r, tau)
        return r - self.source(tau), J

    def residual(self, u_r, tau=None):
        return self._eval(u_r, tau, False)[0]

    def jacobian(self, u_r, tau=None):
        return self._eval(u_r, tau, True)[1]


class SgaCrom(ReducedModel):
    formulation = "SGA_CROM"

    def __init__(self, pod, fom, deim_ops=None):
        if not isinstance(fom, SgaModel):
            raise InvalidParameter("SGA_CROM needs an SGA full-order model")
        super().__init__(pod, fom, deim_ops)
        names = fom.nonlinear_terms
        self._require(names)
        v = self.v
        prob = fom.problem
        asm = element_assembler(fom.space)
        self.masked = {}
        self.v_loc = {}
        for nm in names:
            op = self.deim_ops[nm]
            coef = {"K": prob.a, "l": prob.c, "m": prob.d}[nm]
            ma = MaskedAssembler(fom.space, coef, op.indices, nm)
            self.masked[nm] = ma
            self.v_loc[nm] = ma.local_basis(v)
            if nm == "K":
                D = op.d_f
                kr = np.empty((self.n, self.n, D.shape[1]))
                for s in range(D.shape[1]):
                    m = sp.csc_matrix((D[:, s], asm.indices, asm.indptr), shape=(asm.n, asm.n))
                    kr[:, :, s] = v.T @ (m @ v)
                self.projected["K_deim_r"] = kr
                self._kr_t = np.ascontiguousarray(kr.transpose(0, 2, 1))
            elif nm == "l":
                self.projected["load_l"] = v.T @ op.d_f
            else:
                self.projected["load_m"] = prob.d_scale * (v.T @ op.d_f)

    def _eval(self, u_r, tau, jacobian):
        fom = self.full_refs
        J = None
        if "K" in self.masked:
            ma = self.masked["K"]
            u_el = self.v_loc["K"] @ u_r
            k, pd = ma.evaluate(u_el, tau, jacobian)
            Kr = self.projected["K_deim_r"] @ k
            r = Kr @ u_r
            if jacobian:
                J = Kr + (self._kr_t @ u_r) @ ma.reduced_jacobian(pd, self.v_loc["K"])
        else:
            a0 = fom.problem.a.constant
            r = a0 * (self.projected["K_r"] @ u_r)
            J = a0 * self.projected["K_r"] if jacobian else None
        for nm in ("l", "m"):
            if nm not in self.masked:
                continue
            ma = self.masked[nm]
            u_el = self.v_loc[nm] @ u_r
            f, pd = ma.evaluate(u_el, tau, jacobian)
            load = self.projected[f"load_{nm}"]
            r = r + load @ f
            if jacobian:
                J = J + load @ ma.reduced_jacobian(pd, self.v_loc[nm])
        return r - self.source(tau), J

    def residual(self, u_r, tau=None):
        return self._eval(u_r, tau, False)[0]

    def jacobian(self, u_r, tau=None):
        return self._eval(u_r, tau, True)[1]


class MlsgaRom(ReducedModel):
    formulation = "MLSGA_ROM"

    def __init__(self, pod, fom, deim_ops=None):
        if not isinstance(fom, MlsgaModel):
            raise InvalidParameter("MLSGA_ROM needs a multilinear full-order model")
        super().__init__(pod, fom, deim_ops)
        v = self.v
        mr = np.empty((self.n, self.n, self.n))
        for k in range(self.n):
            mr[:, :, k] = v.T @ (contract1(fom.ml, v[:, k]) @ v)
        self.projected["M_r"] = mr
        self._mr_t = np.ascontiguousarray(mr.transpose(0, 2, 1))
        self.a0 = fom.a0
        self.s = fom.problem.d_scale

    def residual(self, u_r, tau=None):
        quad = (self.projected["M_r"] @ u_r) @ u_r
        r = self.a0 * (self.projected["K_r"] @ u_r) + self.s * quad - self.source(tau)
        check_finite("reduced residual", r)
        return r

    def jacobian(self, u_r, tau=None):
        dm = self.projected["M_r"] @ u_r + self._mr_t @ u_r
        return self.a0 * self.projected["K_r"] + self.s * dm


_CLASSES = {
    "SGA_ROM": SgaRom,
    "EGFEM_ROM": EgfemRom,
    "SGA_CROM": SgaCrom,
    "EGFEM_CROM": EgfemCrom,
    "MLSGA_ROM": MlsgaRom,
}


def project(formulation, pod, fom, deim_ops=None):
    """Build a reduced model of ``fom`` on the basis ``pod``.

    ``deim_ops`` maps term names to DEIM operators: ``K``, ``l``, ``m`` for the
    SGA-cROM and the coefficient names ``a``, ``c``, ``d`` for the EGFEM-cROM.
    """
    try:
        cls = _CLASSES[formulation.upper()]
    except KeyError:
        raise InvalidParameter(f"unknown reduced formulation {formulation!r}") from None
    return cls(pod, fom, deim_ops)

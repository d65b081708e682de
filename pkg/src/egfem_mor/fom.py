"""Full-order models: residual, Jacobian and nonlinearity snapshots of one
discretization (SGA, group/EGFEM, or the multilinear tensor form).

All models solve ``R(u; tau) = 0`` with

    R(u) = K(a, u) u + l(c, u) + s_d m(d, u) - q(tau)

on the free dofs of a P1 space, and time-dependent problems add ``E du/dt``.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

from .assembly import (
    assemble_derivative_load,
    assemble_group_matrix,
    assemble_linear,
    assemble_ml_tensor,
    assemble_sga_nonlinear,
    assemble_source,
    assemble_stiffness_tensor,
    check_finite,
    element_assembler,
    eval_point_nonlinearity,
)
from .errors import GradientUndefined, InvalidParameter
from .meshfe.space import build_interpolation, build_space
from . import tensor3
from .tensor3 import contract1, contract2_outer, contract_mode


def cached_tensor(cache_dir, key, build):
    """Load tensor ``key`` from ``cache_dir`` or build and store it."""
    if cache_dir is None:
        return build()
    path = os.path.join(cache_dir, f"{key}.egt3")
    if os.path.exists(path):
        return tensor3.load(path)
    t = build()
    os.makedirs(cache_dir, exist_ok=True)
    tmp = f"{path}.{os.getpid()}.tmp"
    tensor3.dump(t, tmp)
    os.replace(tmp, path)
    return t


class FullOrderModel:
    """Common parts: linear operators, source cache and initial value."""

    formulation = "FOM"

    def __init__(self, space, problem):
        if space.degree != 1:
            raise InvalidParameter("solution space must be P1")
        self.space = space
        self.problem = problem
        self.E, self.K = assemble_linear(space)
        self.n = space.n_free
        self._q_cache = None

    @property
    def label(self):
        return self.formulation

    @property
    def mass(self):
        return self.E

    def prolong(self, u):
        return u

    def source(self, tau=None):
        key = None if tau is None else np.asarray(tau, dtype=float).tobytes()
        cached = self._q_cache  # one tuple, so concurrent readers see a consistent pair
        if cached is None or cached[0] != key:
            cached = (key, assemble_source(self.space, self.problem.q, tau))
            self._q_cache = cached
        return cached[1]

    def initial_value(self):
        if self.problem.u0 is None:
            return np.zeros(self.n)
        x = self.space.dof_coords[self.space.free_dofs]
        return np.asarray(self.problem.u0(x), dtype=float) * np.ones(self.n)

    def rhs(self, u, tau):
        """``-R(u; t)`` for the semi-discrete system ``E du/dt = -R``."""
        return -self.residual(u, tau)

    def rhs_jacobian(self, u, tau):
        return -self.jacobian(u, tau)

    nonlinear_terms: tuple = ()


class SgaModel(FullOrderModel):
    """Standard Galerkin: every nonlinear form integrated by quadrature."""

    formulation = "SGA"

    def __init__(self, space, problem):
        super().__init__(space, problem)
        terms = []
        if problem.a.constant is None:
            terms.append("K")
        if problem.c is not None:
            terms.append("l")
        if problem.d is not None:
            terms.append("m")
        self.nonlinear_terms = tuple(terms)
        self.asm = element_assembler(space)

    def _terms(self, u, tau, jacobian):
        t = assemble_sga_nonlinear(self.space, self.problem, u, tau, jacobian=jacobian)
        m = dm = None
        if self.problem.d is not None:
            if jacobian:
                m, dm = assemble_derivative_load(self.space, self.problem.d, u, tau, True)
            else:
                m = assemble_derivative_load(self.space, self.problem.d, u, tau)
        return t, m, dm

    def residual(self, u, tau=None):
        t, m, _ = self._terms(u, tau, False)
        r = t.K @ u - self.source(tau)
        if t.l is not None:
            r = r + t.l
        if m is not None:
            r = r + self.problem.d_scale * m
        return r

    def jacobian(self, u, tau=None):
        t, _, dm = self._terms(u, tau, True)
        J = t.dK
        if t.dl is not None:
            J = J + t.dl
        if dm is not None:
            J = J + self.problem.d_scale * dm
        return sp.csc_matrix(J)

    def nonlinear_snapshot(self, u, tau=None):
        """Nonlinear terms at state ``u``: ``K`` as its pattern vector, ``l``
        and ``m`` as vectors."""
        t, m, _ = self._terms(u, tau, False)
        out = {}
        if "K" in self.nonlinear_terms:
            out["K"] = t.K.data.copy()
        if t.l is not None:
            out["l"] = t.l
        if m is not None:
            out["m"] = m
        return out


def _coefficient_space(mesh, coef, degree):
    if coef.uses_grad and degree >= 1:
        raise GradientUndefined(
            f"coefficient {coef.name!r} depends on grad u, which is discontinuous at "
            f"the nodes of a P{degree} space; use P0"
        )
    return build_space(mesh, degree, dirichlet=coef.vanishes_at_zero)


class GroupModel(FullOrderModel):
    """Group formulation: coefficients interpolated into ``W_h`` spaces and
    integrated against precomputed operators.

    ``degrees`` maps coefficient name (``a``, ``c``, ``d``) to the degree of
    its interpolation space; an int applies to all present coefficients.
    Degree 1 is the classical group finite element method.
    """

    formulation = "EGFEM"

    def __init__(self, space, problem, degrees=0, cache_dir=None):
        super().__init__(space, problem)
        names = [n for n in ("a", "c", "d") if getattr(problem, n) is not None]
        if problem.a.constant is not None:
            names.remove("a")
        if isinstance(degrees, int):
            degrees = {n: degrees for n in names}
        self.degrees = dict(degrees)
        self.coefs = {n: getattr(problem, n) for n in names}
        self.w_spaces = {}
        self.ops = {}
        mesh = space.mesh
        for n in names:
            if n not in self.degrees:
                raise InvalidParameter(f"no interpolation degree for coefficient {n!r}")
            ws = _coefficient_space(mesh, self.coefs[n], self.degrees[n])
            self.w_spaces[n] = ws
            self.ops[n] = build_interpolation(space, ws)
        self.k_a = None
        if "a" in names:
            ws = self.w_spaces["a"]
            key = f"{mesh.fingerprint()}_stiffness_P{ws.degree}{'d' if ws.dirichlet else ''}"
            self.k_a = cached_tensor(
                cache_dir, key, lambda: assemble_stiffness_tensor(space, self.w_spaces["a"]))
        self.l_c = assemble_group_matrix(space, self.w_spaces["c"], "value") if "c" in names else None
        self.m_d = (assemble_group_matrix(space, self.w_spaces["d"], "derivative")
                    if "d" in names else None)
        self.nonlinear_terms = tuple(names)
        self.a0 = problem.a.constant

    @property
    def label(self):
        degs = sorted(set(self.degrees.values()))
        if degs == [1]:
            return "GFEM(P1)"
        return "EGFEM(" + ",".join(f"P{d}" for d in degs) + ")"

    def coefficient_values(self, u, tau=None, jacobian=False):
        out = {}
        for n, coef in self.coefs.items():
            out[n] = eval_point_nonlinearity(self.ops[n], coef, u, tau, jacobian=jacobian)
        return out

    def _stiffness(self, a_vec):
        return contract1(self.k_a, a_vec)

    def residual(self, u, tau=None):
        vals = self.coefficient_values(u, tau)
        if self.a0 is not None:
            r = self.a0 * (self.K @ u)
        else:
            r = self._stiffness(vals["a"][0]) @ u
        if "c" in vals:
            r = r + self.l_c @ vals["c"][0]
        if "d" in vals:
            r = r + self.problem.d_scale * (self.m_d @ vals["d"][0])
        return r - self.source(tau)

    def jacobian(self, u, tau=None):
        vals = self.coefficient_values(u, tau, jacobian=True)
        if self.a0 is not None:
            J = self.a0 * self.K
        else:
            a_vec, da = vals["a"]
            J = self._stiffness(a_vec) + contract_mode(self.k_a, u, 2) @ da
        if "c" in vals:
            J = J + self.l_c @ vals["c"][1]
        if "d" in vals:
            J = J + self.problem.d_scale * (self.m_d @ vals["d"][1])
        return sp.csc_matrix(J)

    def nonlinear_snapshot(self, u, tau=None):
        return {n: v[0] for n, v in self.coefficient_values(u, tau).items()}


class MlsgaModel(FullOrderModel):
    """Multilinear form for ``d(u) = u^2`` with constant diffusion:
    ``a0 K u + s_d M:(u (x) u) + l(c, u) - q``."""

    formulation = "MLSGA"

    def __init__(self, space, problem, cache_dir=None):
        super().__init__(space, problem)
        if problem.a.constant is None:
            raise InvalidParameter("the multilinear form needs a constant diffusion coefficient")
        if problem.d is None or problem.d.name != "square":
            raise InvalidParameter("the multilinear form needs the quadratic flux d(u) = u^2")
        if problem.c is not None:
            raise InvalidParameter("the multilinear form does not cover a reaction term")
        self.ml = cached_tensor(cache_dir, f"{space.mesh.fingerprint()}_convection",
                                lambda: assemble_ml_tensor(space))
        self.a0 = problem.a.constant
        self.nonlinear_terms = ()

    def residual(self, u, tau=None):
        m = contract2_outer(self.ml, u, u)
        r = self.a0 * (self.K @ u) + self.problem.d_scale * m - self.source(tau)
        check_finite("multilinear residual", r)
        return r

    def jacobian(self, u, tau=None):
        dm = contract_mode(self.ml, u, 3) + contract_mode(self.ml, u, 2)
        return sp.csc_matrix(self.a0 * self.K + self.problem.d_scale * dm)

    def nonlinear_snapshot(self, u, tau=None):
        return {}


def build_fom(kind, space, problem, cache_dir=None):
    """Construct a full-order model from a formulation label.

    ``kind`` is one of ``SGA``, ``MLSGA``, ``GFEM(P1)``, ``EGFEM(P0)``,
    ``EGFEM(P1)``, ``EGFEM(P2)``. Precomputed tensors are cached in
    ``cache_dir`` when given.
    """
    k = kind.upper().replace("-", "").replace(" ", "")
    if k == "SGA":
        return SgaModel(space, problem)
    if k == "MLSGA":
        return MlsgaModel(space, problem, cache_dir)
    if k in ("GFEM(P1)", "GFEM"):
        return GroupModel(space, problem, 1, cache_dir)
    if k.startswith("EGFEM(P") and k.endswith(")") and k[7:-1].isdigit():
        return GroupModel(space, problem, int(k[7:-1]), cache_dir)
    raise InvalidParameter(f"unknown formulation {kind!r}")

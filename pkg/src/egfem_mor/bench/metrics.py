"""Error measures used by the benchmark reports."""

from __future__ import annotations

import numpy as np

from ..assembly import element_assembler
from ..errors import ShapeMismatch


def error_metrics(u_ref, u_test, norm="euclidean", K=None, relative=False):
    """Distance between two coefficient vectors.

    ``norm="euclidean"`` is the 2-norm; ``norm="energy"`` is ``sqrt(e^T K e)``
    for the constant stiffness matrix ``K``. With ``relative`` the result is
    divided by the norm of ``u_ref`` (0/0 is reported as 0).
    """
    u_ref = np.asarray(u_ref, dtype=float)
    u_test = np.asarray(u_test, dtype=float)
    if u_ref.shape != u_test.shape:
        raise ShapeMismatch(f"vectors of shape {u_ref.shape} and {u_test.shape}")
    e = u_ref - u_test
    if norm == "euclidean":
        val, ref = np.linalg.norm(e), np.linalg.norm(u_ref)
    elif norm == "energy":
        if K is None:
            raise ValueError("the energy norm needs the stiffness matrix")
        val = np.sqrt(max(float(e @ (K @ e)), 0.0))
        ref = np.sqrt(max(float(u_ref @ (K @ u_ref)), 0.0))
    else:
        raise ValueError(f"unknown norm {norm!r}")
    if not relative:
        return float(val)
    return float(val / ref) if ref > 0 else (0.0 if val == 0 else float("inf"))


def mean_error(U_ref, U_test, norm="euclidean", K=None, relative=False):
    """Arithmetic mean of column-wise errors."""
    U_ref = np.atleast_2d(U_ref)
    U_test = np.atleast_2d(U_test)
    errs = [error_metrics(U_ref[:, i], U_test[:, i], norm, K, relative)
            for i in range(U_ref.shape[1])]
    return float(np.mean(errs))


def seminorm_error(space, u, exact_grad, t, relative=True):
    """``|u_hat - u_h|_{H^1}`` by quadrature against the analytic gradient.

    ``u`` holds free-dof values of the P1 function; ``exact_grad(x, t)`` returns
    gradients of shape ``(..., 2)``.
    """
    asm = element_assembler(space)
    u_el = asm.element_values(u)
    gh = np.einsum("tmd,tm->td", asm.geo.grad, u_el)
    ge = exact_grad(asm.xq, t)
    err = np.sum((ge - gh[:, None, :]) ** 2, axis=-1) @ asm.w
    ref = np.sum(ge**2, axis=-1) @ asm.w
    e = np.sqrt(asm.geo.area @ err)
    if not relative:
        return float(e)
    r = np.sqrt(asm.geo.area @ ref)
    return float(e / r) if r > 0 else float(e)


def observed_rates(h, err):
    """Convergence rates ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    return np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])

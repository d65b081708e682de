"""Nonlinear and time-dependent solvers.

``newton`` is a damped Newton method (Armijo backtracking with step halving);
``integrate`` is a variable-step BDF integrator of orders 1 and 2 for
``M du/dt = f(u, t)`` with a constant, possibly singular-free mass matrix.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, NonFiniteValue, SingularJacobian, SingularMatrix, StepFailure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and limits shared by ``newton`` and ``integrate``.

    For ``newton``, ``abs_tol`` bounds the residual norm and ``rel_tol`` the
    Newton correction relative to ``1 + |u|``. For ``integrate`` they are the
    absolute and relative local error tolerances.
    """

    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_iter: int = 50
    initial_guess: Optional[np.ndarray] = None
    max_halvings: int = 8
    armijo: float = 1e-4
    # integrator only
    max_order: int = 2
    fixed_step: Optional[float] = None
    first_step: Optional[float] = None
    min_step: float = 1e-12
    max_step: Optional[float] = None

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.max_order not in (1, 2):
            raise ValueError("max_order must be 1 or 2")

    @classmethod
    def stationary(cls, **kw):
        return cls(**{"abs_tol": 1e-8, "rel_tol": 1e-8, **kw})

    @classmethod
    def transient(cls, **kw):
        return cls(**{"abs_tol": 1e-8, "rel_tol": 1e-6, **kw})

    def with_guess(self, u0):
        return replace(self, initial_guess=u0)


# linear algebra --------------------------------------------------------------
def factorize(A):
    """Return a solver ``b -> A^{-1} b`` (sparse LU or dense LU).

    Sparse matrices are ordered on the pattern of ``A + A^T``, which suits the
    structurally symmetric matrices of finite element discretizations.
    """
    if sp.issparse(A):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A")
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SingularMatrix(str(exc)) from None
        solve = lu.solve
    else:
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise SingularMatrix("matrix must be square")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", la.LinAlgWarning)
            try:
                lu = la.lu_factor(A, check_finite=True)
            except (ValueError, la.LinAlgError) as exc:
                raise SingularMatrix(str(exc)) from None
        if np.any(np.diag(lu[0]) == 0.0):
            raise SingularMatrix("exactly singular matrix")

        def solve(b):
            return la.lu_solve(lu, b, check_finite=False)

    def checked(b):
        x = solve(np.asarray(b, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SingularMatrix("solution of linear system is not finite")
        return x

    return checked


def linear_solve(A, b):
    """Direct solve with one step of iterative refinement when the relative
    residual exceeds ``1e-10``."""
    if A.shape[0] != A.shape[1]:
        raise SingularMatrix("matrix must be square")
    solve = factorize(A)
    b = np.asarray(b, dtype=float)
    x = solve(b)
    r = b - A @ x
    nb = np.linalg.norm(b)
    if nb > 0 and np.linalg.norm(r) > 1e-10 * nb:
        x = x + solve(r)
    return x


# Newton ----------------------------------------------------------------------
@dataclass
class NewtonResult:
    solution: np.ndarray
    iterations: int
    timings: list = field(default_factory=list)
    residual_norm: float = 0.0
    converged: bool = True

    @property
    def time_per_iteration(self):
        return float(np.mean(self.timings)) if self.timings else 0.0


def newton(residual_fn, jacobian_fn, config=None, n=None, callback=None):
    """Damped Newton iteration from ``config.initial_guess`` (zero if unset).

    Converges when ``|r(u)| <= abs_tol`` and the Newton correction at ``u``
    satisfies ``|du| <= rel_tol (1 + |u|)``. ``iterations`` counts accepted
    updates; ``timings`` holds the wall time of every linearization
    (Jacobian, linear solve, line search residuals).
    """
    cfg = config or SolverConfig.stationary()
    if cfg.initial_guess is not None:
        u = np.array(cfg.initial_guess, dtype=float, copy=True)
    elif n is not None:
        u = np.zeros(n)
    else:
        raise ValueError("newton needs an initial guess or the problem size n")
    r = residual_fn(u)
    nr = np.linalg.norm(r)
    if not np.isfinite(nr):
        raise NonFiniteValue("residual at the initial guess is not finite")
    timings = []
    its = 0
    while True:
        t0 = time.perf_counter()
        J = jacobian_fn(u)
        try:
            du = -linear_solve(J, r)
        except SingularMatrix as exc:
            raise SingularJacobian(str(exc)) from None
        if nr <= cfg.abs_tol and np.linalg.norm(du) <= cfg.rel_tol * (1.0 + np.linalg.norm(u)):
            timings.append(time.perf_counter() - t0)
            return NewtonResult(u, its, timings, nr, True)
        if its >= cfg.max_iter:
            raise NoConvergence(
                f"Newton did not converge in {cfg.max_iter} iterations (|r| = {nr:.3e})"
            )
        step = 1.0
        best = None
        for _ in range(cfg.max_halvings + 1):
            trial = u + step * du
            try:
                rt = residual_fn(trial)
                nt = np.linalg.norm(rt)
            except NonFiniteValue:
                nt = np.inf
            if np.isfinite(nt):
                best = (trial, rt, nt)
                if nt <= (1.0 - cfg.armijo * step) * nr:
                    break
            step *= 0.5
        if best is None:
            raise NoConvergence("line search found no finite residual")
        u, r, nr = best
        its += 1
        timings.append(time.perf_counter() - t0)
        if callback is not None:
            callback(its, u, nr)


# BDF integration ---------------------------------------------------------------
@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # (n, len(t))
    steps: int = 0
    rejected: int = 0
    newton_iterations: int = 0
    step_times: list = field(default_factory=list)

    @property
    def time_per_iteration(self):
        if not self.newton_iterations:
            return 0.0
        return float(np.sum(self.step_times)) / self.newton_iterations


def _wrms(v, scale):
    return float(np.sqrt(np.mean((v / scale) ** 2))) if len(v) else 0.0


def _divided_interp(ts, ys, t):
    """Newton-form interpolation through points ``ts`` (ascending); exact for
    constant data."""
    n = len(ts)
    coef = [y.copy() for y in ys]
    for lvl in range(1, n):
        for i in range(n - 1, lvl - 1, -1):
            coef[i] = (coef[i] - coef[i - 1]) / (ts[i] - ts[i - lvl])
    out = coef[-1].copy()
    for i in range(n - 2, -1, -1):
        out = coef[i] + (t - ts[i]) * out
    return out


def integrate(mass, rhs_fn, jac_fn, u0, t_span, t_eval=None, config=None):
    """Integrate ``mass du/dt = rhs_fn(u, t)`` over ``t_span``.

    Variable-step BDF1 (start-up) and BDF2 with local error control in the
    weighted RMS norm ``atol + rtol |u|``; with ``config.fixed_step`` the step
    is held fixed and no error control is applied. The solution is returned
    at ``t_eval`` (default: the endpoints) by interpolation through the last
    accepted steps.
    """
    cfg = config or SolverConfig.transient()
    t0, t1 = float(t_span[0]), float(t_span[1])
    u0 = np.array(u0, dtype=float)
    n = len(u0)
    if mass is None:
        mass = sp.identity(n, format="csc")
    sparse = sp.issparse(mass)
    if not sparse:
        mass = np.asarray(mass, dtype=float)
    t_eval = np.array([t0, t1] if t_eval is None else t_eval, dtype=float)
    out = np.empty((n, len(t_eval)))
    out_i = 0
    while out_i < len(t_eval) and t_eval[out_i] <= t0:
        out[:, out_i] = u0
        out_i += 1
    atol, rtol = cfg.abs_tol, cfg.rel_tol
    fixed = cfg.fixed_step
    span = t1 - t0
    h_max = cfg.max_step or span

    if fixed is not None:
        h = float(fixed)
    elif cfg.first_step is not None:
        h = float(cfg.first_step)
    else:
        f0 = rhs_fn(u0, t0)
        du0 = factorize(mass)(f0)
        scale = atol + rtol * np.abs(u0)
        d0, d1 = _wrms(u0, scale), _wrms(du0, scale)
        h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h = min(h, 0.01 * span, h_max)
    hist_t, hist_u = [t0], [u0]
    traj = Trajectory(t_eval, out)
    t, u = t0, u0
    while t < t1 - 1e-14 * max(1.0, abs(t1)):
        if fixed is not None:
            # multiples of the step, not a running sum, so the end is hit exactly
            tn = min(t0 + (traj.steps + 1) * fixed, t1)
            if t1 - tn <= 1e-9 * fixed:
                tn = t1
            h = tn - t
        else:
            h = min(h, t1 - t)
            if t1 - (t + h) <= 1e-9 * h:
                h = t1 - t
            tn = t + h
        if h < cfg.min_step:
            raise StepFailure(f"step size {h:.3e} below minimum at t = {t:.6g}")
        # adaptive BDF2 needs three history points for its error estimate
        if cfg.max_order == 2 and len(hist_t) >= (2 if fixed is not None else 3):
            hp = t - hist_t[-2]
            om = h / hp
            beta = (1.0 + om) / (1.0 + 2.0 * om)
            psi = u + (om * om / (1.0 + 2.0 * om)) * (u - hist_u[-2])
            order = 2
        else:
            order = 1
            beta = 1.0
            psi = u
        # predictor: polynomial extrapolation through the last order+1 points
        npts = min(len(hist_t), order + 1)
        if npts >= 2:
            pred = _divided_interp(hist_t[-npts:], hist_u[-npts:], tn)
        else:
            pred = u.copy()
        step_start = time.perf_counter()
        hb = h * beta
        try:
            J = jac_fn(pred, tn)
            A = (mass - hb * J) if sparse else (mass - hb * np.asarray(J))
            solve = factorize(A)
            unew = pred
            ok = False
            its = 0
            for its in range(1, 7):
                G = mass @ (unew - psi) - hb * rhs_fn(unew, tn)
                delta = -solve(G)
                unew = unew + delta
                scale = atol + rtol * np.maximum(np.abs(u), np.abs(unew))
                if _wrms(delta, scale) <= 1e-2:
                    ok = True
                    break
        except (SingularMatrix, NonFiniteValue):
            ok = False
        traj.step_times.append(time.perf_counter() - step_start)
        if not ok:
            if fixed is not None:
                raise StepFailure(f"corrector failed with fixed step at t = {t:.6g}")
            traj.rejected += 1
            h *= 0.25
            continue
        traj.newton_iterations += its
        if fixed is None:
            if len(hist_t) == 1:
                # explicit Euler predictor from the initial derivative
                f0 = rhs_fn(u, t)
                pred = u + h * factorize(mass)(f0)
                const = 0.5
            else:
                const = 1.0 / 3.0 if order == 1 else 2.0 / 11.0
            err = const * _wrms(unew - pred, scale)
            if err > 1.0:
                traj.rejected += 1
                h *= max(0.2, 0.9 * err ** (-1.0 / (order + 1)))
                continue
            factor = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * err ** (-1.0 / (order + 1))))
            h_next = min(h * factor, h_max)
        else:
            h_next = h
        # dense output on (t, tn]
        pts_t = hist_t[-order:] + [tn]
        pts_u = hist_u[-order:] + [unew]
        while out_i < len(t_eval) and t_eval[out_i] <= tn + 1e-12 * max(1.0, abs(tn)):
            out[:, out_i] = unew if t_eval[out_i] >= tn else _divided_interp(pts_t, pts_u, t_eval[out_i])
            out_i += 1
        hist_t = hist_t[-2:] + [tn]
        hist_u = hist_u[-2:] + [unew]
        t, u = tn, unew
        traj.steps += 1
        h = h_next
    while out_i < len(t_eval):
        out[:, out_i] = u
        out_i += 1
    return traj

"""The three benchmark problems and their parameter grids."""

from __future__ import annotations

import numpy as np

from ..assembly import Coefficient, ProblemDefinition

NU = 1.0 / 100.0
SEMILINEAR_BOX = np.array([[0.01, 10.0], [0.01, 10.0]])
MINSURFACE_BOX = np.array([[0.0, 1.0], [0.0, 1.0]])


# parameter sampling ----------------------------------------------------------
def training_grid(box, n_per_dim):
    """Tensor grid including the box endpoints, ``n_per_dim**2`` rows of
    ``(mu1, mu2)`` with ``mu2`` varying fastest."""
    axes = [np.linspace(lo, hi, n_per_dim) for lo, hi in box]
    m1, m2 = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m1.ravel(), m2.ravel()])


def evaluation_grid(box, n_per_dim):
    """Cell-centred tensor grid; never contains the box endpoints."""
    axes = []
    for lo, hi in box:
        edges = np.linspace(lo, hi, n_per_dim + 1)
        axes.append(0.5 * (edges[:-1] + edges[1:]))
    m1, m2 = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m1.ravel(), m2.ravel()])


# semilinear ------------------------------------------------------------------
def _reaction(x, u, g, mu):
    m1, m2 = mu[0], mu[1]
    return m1 / m2 * np.expm1(m2 * u)


def _reaction_du(x, u, g, mu):
    return mu[0] * np.exp(mu[1] * u)


def _sine_source(x, tau=None):
    return 100.0 * np.sin(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1])


def semilinear_problem():
    """``-lap u + mu1/mu2 (exp(mu2 u) - 1) = 100 sin(2 pi x1) sin(2 pi x2)``
    on the unit square."""
    c = Coefficient("exp_reaction", _reaction, _reaction_du, vanishes_at_zero=True)
    return ProblemDefinition(
        "semilinear", a=Coefficient.const(1.0, "one"), q=_sine_source, c=c,
        param_domain=SEMILINEAR_BOX.copy(),
    )


# Burgers ---------------------------------------------------------------------
def _bracket(x1, x2, t):
    e2, e4, e1 = np.exp(-t / 2), np.exp(-t / 4), np.exp(-t)
    B = np.sin(2 * x1 * t) * e2 + np.cos(x2 * t) * e4 + np.sin(x1 * x2 * t) * e1
    Bt = (2 * x1 * np.cos(2 * x1 * t) * e2 - 0.5 * np.sin(2 * x1 * t) * e2
          - x2 * np.sin(x2 * t) * e4 - 0.25 * np.cos(x2 * t) * e4
          + x1 * x2 * np.cos(x1 * x2 * t) * e1 - np.sin(x1 * x2 * t) * e1)
    B1 = 2 * t * np.cos(2 * x1 * t) * e2 + x2 * t * np.cos(x1 * x2 * t) * e1
    B2 = -t * np.sin(x2 * t) * e4 + x1 * t * np.cos(x1 * x2 * t) * e1
    B11 = -4 * t**2 * np.sin(2 * x1 * t) * e2 - x2**2 * t**2 * np.sin(x1 * x2 * t) * e1
    B22 = -t**2 * np.cos(x2 * t) * e4 - x1**2 * t**2 * np.sin(x1 * x2 * t) * e1
    return B, Bt, B1, B2, B11, B22


def _bubble(x1, x2):
    f1, f2 = x1 * (x1 - 1), x2 * (x2 - 1)
    P = 10 * f1 * f2
    return P, 10 * (2 * x1 - 1) * f2, 10 * f1 * (2 * x2 - 1), 20 * f2, 20 * f1


def burgers_exact(x, t):
    """Manufactured solution ``u_hat(x, t)``."""
    x1, x2 = x[..., 0], x[..., 1]
    return _bubble(x1, x2)[0] * _bracket(x1, x2, t)[0]


def burgers_exact_grad(x, t):
    x1, x2 = x[..., 0], x[..., 1]
    P, P1, P2, _, _ = _bubble(x1, x2)
    B, _, B1, B2, _, _ = _bracket(x1, x2, t)
    return np.stack([P1 * B + P * B1, P2 * B + P * B2], axis=-1)


def burgers_source(x, t):
    """``q = du/dt - nu lap u + u (du/dx1 + du/dx2)`` for ``u = u_hat``."""
    x1, x2 = x[..., 0], x[..., 1]
    P, P1, P2, P11, P22 = _bubble(x1, x2)
    B, Bt, B1, B2, B11, B22 = _bracket(x1, x2, t)
    u = P * B
    ut = P * Bt
    u1 = P1 * B + P * B1
    u2 = P2 * B + P * B2
    lap = (P11 + P22) * B + 2 * (P1 * B1 + P2 * B2) + P * (B11 + B22)
    return ut - NU * lap + u * (u1 + u2)


def _square(x, u, g, t):
    return u * u


def _square_du(x, u, g, t):
    return 2.0 * u


def burgers_problem(t_end=10.0):
    d = Coefficient("square", _square, _square_du, vanishes_at_zero=True)
    return ProblemDefinition(
        "burgers", a=Coefficient.const(NU, "viscosity"), q=burgers_source, d=d,
        d_scale=-0.5, time_dependent=True, t_span=(0.0, float(t_end)),
        u0=lambda x: burgers_exact(x, 0.0),
        meta={"exact": burgers_exact, "exact_grad": burgers_exact_grad, "nu": NU},
    )


# minimal surface -------------------------------------------------------------
def _area_coef(x, u, g, mu):
    return 1.0 / np.sqrt(1.0 + np.sum(g * g, axis=-1))


def _area_coef_dg(x, u, g, mu):
    s = 1.0 + np.sum(g * g, axis=-1)
    return -g * s[..., None] ** -1.5


def minsurface_source(x, mu, exponent=-1.0):
    """``2 (exp(exponent |x|^2) - exp(-1)) exp(mu . x)``.

    With the default ``exponent = -1`` the source vanishes on the unit circle.
    With ``exponent = +1`` its integral over the disk exceeds the perimeter
    for every ``mu`` in ``[0, 1]^2``. The flux ``grad u / sqrt(1 + |grad u|^2)``
    has magnitude below one, so that equation has no solution.
    """
    r2 = np.sum(x * x, axis=-1)
    return (2.0 * (np.exp(exponent * r2) - np.exp(-1.0))
            * np.exp(mu[0] * x[..., 0] + mu[1] * x[..., 1]))


def minsurface_problem(exponent=-1.0):
    """Prescribed mean curvature ``-div(grad u / sqrt(1 + |grad u|^2)) = q``
    on the unit disk; see :func:`minsurface_source` for ``exponent``."""
    a = Coefficient(
        "area", _area_coef, lambda x, u, g, mu: np.zeros(np.shape(u)), _area_coef_dg,
        uses_grad=True,
    )
    return ProblemDefinition(
        "minsurface", a=a, q=lambda x, mu: minsurface_source(x, mu, exponent),
        param_domain=MINSURFACE_BOX.copy(), meta={"exponent": exponent},
    )


PROBLEMS = {
    "semilinear": semilinear_problem,
    "burgers": burgers_problem,
    "minsurface": minsurface_problem,
}

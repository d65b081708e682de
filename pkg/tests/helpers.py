"""Model builders shared by the reduced-model and acceptance tests."""

import numpy as np

from egfem_mor.bench import burgers_problem, minsurface_problem, semilinear_problem
from egfem_mor.fom import build_fom
from egfem_mor.meshfe import build_space, unit_disk, unit_square
from egfem_mor.reduction import PodBasis, deim, deim_from_basis, pod

PROBLEMS = {
    "semilinear": (semilinear_problem, (2.0, 3.0), 0.1),
    "burgers": (burgers_problem, 0.7, 1.0),
    "minsurface": (minsurface_problem, (0.4, 0.6), 0.5),
}
FORMULATIONS = {
    "semilinear": ("SGA", "GFEM(P1)", "EGFEM(P0)", "EGFEM(P2)"),
    "burgers": ("SGA", "GFEM(P1)", "EGFEM(P2)", "MLSGA"),
    "minsurface": ("SGA", "EGFEM(P0)"),
}

def brute_force_deim(Y, n_f):
    """Textbook greedy on numpy's SVD; plain loops, first maximum wins."""
    U = np.linalg.svd(Y, full_matrices=False)[0][:, :n_f]
    for c in range(U.shape[1]):
        k = int(np.argmax(np.abs(U[:, c])))
        if U[k, c] < 0:
            U[:, c] = -U[:, c]
    picks = []
    for l in range(n_f):
        if l == 0:
            r = U[:, 0]
        else:
            Pinv = np.linalg.inv(U[picks, :l])
            r = U[:, l] - U[:, :l] @ (Pinv @ U[picks, l])
        best, arg = -1.0, -1
        for j, val in enumerate(np.abs(r)):
            if val > best:
                best, arg = val, j
        picks.append(arg)
    return picks


def low_rank(rng, n, m, r):
    return rng.standard_normal((n, r)) @ rng.standard_normal((r, m))


def rom_names(form):
    if form == "SGA":
        return ("SGA_ROM", "SGA_CROM")
    if form == "MLSGA":
        return ("MLSGA_ROM",)
    return ("EGFEM_ROM", "EGFEM_CROM")


def small_space(bench):
    mesh = unit_disk(0.35) if bench == "minsurface" else unit_square(6)
    return build_space(mesh, 1)


def random_state(fom, rng, scale):
    x = fom.space.dof_coords[fom.space.free_dofs]
    smooth = np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]) if x.min() >= 0 else 1 - (x**2).sum(1)
    return scale * (smooth + 0.3 * rng.standard_normal(fom.n))


def training_data(fom, tau, rng, scale, n_s=12):
    """Random states and the nonlinear snapshots they produce."""
    U = np.column_stack([random_state(fom, rng, scale) for _ in range(n_s)])
    nl = {}
    for c in U.T:
        for k, v in fom.nonlinear_snapshot(c, tau).items():
            nl.setdefault(k, []).append(v)
    return U, {k: np.column_stack(v) for k, v in nl.items()}


def reduced_setup(fom, tau, rng, scale, n_u=6, n_f=8):
    U, nl = training_data(fom, tau, rng, scale)
    basis = pod(U, rank=n_u)
    ops = {k: deim(Y, n_f) for k, Y in nl.items()}
    return basis, ops


def exact_deim(fom, tau):
    """DEIM operators that interpolate every entry (identity basis)."""
    u = np.zeros(fom.n)
    return {k: deim_from_basis(np.eye(len(v))) for k, v in fom.nonlinear_snapshot(u, tau).items()}


def identity_basis(fom):
    return PodBasis.identity(fom.n)


def make_fom(bench, form, space=None, cache_dir=None):
    space = space or small_space(bench)
    return build_fom(form, space, PROBLEMS[bench][0](), cache_dir)

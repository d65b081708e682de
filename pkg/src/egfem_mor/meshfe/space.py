"""Lagrange finite element spaces (P0, P1, P2) and interpolation operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidParameter, MeshMismatch

# barycentric coordinates of the local dofs of each element type
LOCAL_DOFS = {
    0: np.array([[1 / 3, 1 / 3, 1 / 3]]),
    1: np.eye(3),
    2: np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ]
    ),
}


def basis_values(degree, lam):
    """Evaluate the local basis at barycentric points ``lam`` of shape (nq, 3).

    Returns an array of shape (nq, n_local).
    """
    lam = np.atleast_2d(lam)
    if degree == 0:
        return np.ones((lam.shape[0], 1))
    if degree == 1:
        return lam.copy()
    if degree == 2:
        l0, l1, l2 = lam.T
        return np.column_stack(
            [
                l0 * (2 * l0 - 1),
                l1 * (2 * l1 - 1),
                l2 * (2 * l2 - 1),
                4 * l0 * l1,
                4 * l1 * l2,
                4 * l2 * l0,
            ]
        )
    raise InvalidParameter(f"unsupported degree {degree}")


class ElementGeometry:
    """Per-triangle areas, barycentric gradients, and mapped points."""

    def __init__(self, mesh):
        self.mesh = mesh
        p = mesh.nodes[mesh.triangles]  # (T, 3, 2)
        self.vertices = p
        x, y = p[..., 0], p[..., 1]
        self.area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                           - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
        two_a = 2.0 * self.area
        grad = np.empty((len(p), 3, 2))
        grad[:, 0, 0] = (y[:, 1] - y[:, 2]) / two_a
        grad[:, 0, 1] = (x[:, 2] - x[:, 1]) / two_a
        grad[:, 1, 0] = (y[:, 2] - y[:, 0]) / two_a
        grad[:, 1, 1] = (x[:, 0] - x[:, 2]) / two_a
        grad[:, 2, 0] = (y[:, 0] - y[:, 1]) / two_a
        grad[:, 2, 1] = (x[:, 1] - x[:, 0]) / two_a
        self.grad = grad

    def map_points(self, lam, elements=None):
        """Physical coordinates (T, nq, 2) of barycentric points ``lam``."""
        p = self.vertices if elements is None else self.vertices[elements]
        return np.einsum("qm,tmd->tqd", lam, p)


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Scalar Lagrange space of a given degree on a mesh.

    ``free_dofs`` are the dofs that carry unknowns. For a space with
    ``dirichlet=True`` (a solution space, or a coefficient space whose values
    are known to vanish on the boundary) the boundary dofs are excluded.
    """

    mesh: object
    degree: int
    dof_coords: np.ndarray
    elem_dofs: np.ndarray
    boundary_dofs: np.ndarray
    free_dofs: np.ndarray
    dirichlet: bool

    @property
    def n_dofs(self):
        return len(self.dof_coords)

    @property
    def n_free(self):
        return len(self.free_dofs)

    @property
    def free_index(self):
        """Map from global dof to position in ``free_dofs`` (-1 if constrained)."""
        idx = -np.ones(self.n_dofs, dtype=np.int64)
        idx[self.free_dofs] = np.arange(self.n_free)
        return idx

    def local_dof_coords(self):
        return LOCAL_DOFS[self.degree]

    def extend(self, u_free):
        """Full dof vector from free-dof values, zero on constrained dofs."""
        full = np.zeros(self.n_dofs)
        full[self.free_dofs] = u_free
        return full

    def evaluate(self, coeffs, points):
        """Point evaluation of the FE function with full coefficient vector
        ``coeffs`` at physical ``points`` (brute-force element search)."""
        geo = ElementGeometry(self.mesh)
        pts = np.atleast_2d(points)
        out = np.empty(len(pts))
        for r, x in enumerate(pts):
            lam = _barycentric(geo, x)
            inside = np.all(lam >= -1e-12, axis=1)
            t = int(np.flatnonzero(inside)[0])
            phi = basis_values(self.degree, lam[t][None, :])[0]
            out[r] = phi @ coeffs[self.elem_dofs[t]]
        return out


def _barycentric(geo, x):
    p0 = geo.vertices[:, 0, :]
    lam12 = np.einsum("tmd,td->tm", geo.grad[:, 1:, :], x - p0)
    return np.column_stack([1.0 - lam12.sum(axis=1), lam12])


def build_space(mesh, degree, dirichlet=True):
    """Construct the P``degree`` Lagrange space on ``mesh``.

    P0 dofs sit at centroids, P1 at vertices, P2 at vertices followed by edge
    midpoints (edges in lexicographic order of their sorted vertex pairs).
    """
    if degree not in (0, 1, 2):
        raise InvalidParameter(f"degree must be 0, 1 or 2, got {degree!r}")
    tris = mesh.triangles
    if degree == 0:
        coords = mesh.nodes[tris].mean(axis=1)
        elem_dofs = np.arange(len(tris)).reshape(-1, 1)
        boundary = np.zeros(0, dtype=np.int64)
    elif degree == 1:
        coords = mesh.nodes.copy()
        elem_dofs = tris.copy()
        boundary = mesh.boundary_nodes.copy()
    else:
        edges, tri_edges = mesh.edges()
        nv = mesh.n_nodes
        coords = np.concatenate([mesh.nodes, mesh.nodes[edges].mean(axis=1)])
        elem_dofs = np.concatenate([tris, nv + tri_edges], axis=1)
        key = edges[:, 0] * nv + edges[:, 1]
        bkey = mesh.boundary_edges[:, 0] * nv + mesh.boundary_edges[:, 1]
        bedge_ids = np.searchsorted(key, bkey)
        boundary = np.concatenate([mesh.boundary_nodes, nv + np.sort(bedge_ids)])
    n = len(coords)
    if dirichlet:
        mask = np.ones(n, dtype=bool)
        mask[boundary] = False
        free = np.flatnonzero(mask)
    else:
        free = np.arange(n)
    for a in (coords, elem_dofs, boundary, free):
        a.setflags(write=False)
    return FeSpace(mesh, degree, coords, elem_dofs, boundary, free, dirichlet)


@dataclass(frozen=True, eq=False)
class InterpolationOps:
    """Evaluation of a P1 function and its gradient at the free dofs of ``W``.

    ``pi_u`` has shape (N_f, N_u); ``pi_grad`` holds one (N_f, N_u) matrix per
    spatial direction. ``points`` are the dof coordinates ``x_j^f``.
    """

    pi_u: sp.csr_matrix
    pi_grad: tuple
    points: np.ndarray
    w_space: FeSpace
    v_space: FeSpace

    @property
    def n_points(self):
        return self.pi_u.shape[0]

    def apply(self, u):
        """Return ``(u values (N_f,), gradients (N_f, 2))``."""
        return self.pi_u @ u, np.column_stack([g @ u for g in self.pi_grad])

    def restrict(self, rows):
        """Operators restricted to a subset of interpolation points."""
        rows = np.asarray(rows)
        return InterpolationOps(
            self.pi_u[rows],
            tuple(g[rows] for g in self.pi_grad),
            self.points[rows],
            self.w_space,
            self.v_space,
        )


def same_mesh(a, b):
    return a is b or (a.triangles.shape == b.triangles.shape
                      and a.fingerprint() == b.fingerprint())


def owner_elements(space):
    """For each global dof, the lowest-index element containing it and the
    local index of the dof in that element."""
    nt, nloc = space.elem_dofs.shape
    dofs = space.elem_dofs.ravel()
    elems = np.repeat(np.arange(nt), nloc)
    local = np.tile(np.arange(nloc), nt)
    order = np.lexsort((elems, dofs))
    first = np.ones(len(order), dtype=bool)
    first[1:] = dofs[order][1:] != dofs[order][:-1]
    pick = order[first]
    owner = np.empty(space.n_dofs, dtype=np.int64)
    owner_local = np.empty(space.n_dofs, dtype=np.int64)
    owner[dofs[pick]] = elems[pick]
    owner_local[dofs[pick]] = local[pick]
    return owner, owner_local


def build_interpolation(v_space, w_space):
    """Interpolation operators from the P1 space ``v_space`` to the free dofs
    of ``w_space``.

    Values are exact barycentric evaluations. Gradients are the element-wise
    constant P1 gradients; at dofs shared by several elements the element with
    the lowest index supplies the value.
    """
    if v_space.degree != 1:
        raise InvalidParameter("interpolation source space must be P1")
    if not same_mesh(v_space.mesh, w_space.mesh):
        raise MeshMismatch("interpolation spaces live on different meshes")
    geo = ElementGeometry(v_space.mesh)
    owner, owner_local = owner_elements(w_space)
    wdofs = w_space.free_dofs
    t = owner[wdofs]
    lam = LOCAL_DOFS[w_space.degree][owner_local[wdofs]]  # (N_f, 3)
    verts = v_space.free_index[v_space.mesh.triangles[t]]  # (N_f, 3), -1 on boundary
    rows = np.repeat(np.arange(len(wdofs)), 3)
    cols = verts.ravel()
    keep = cols >= 0
    shape = (len(wdofs), v_space.n_free)

    def build(vals):
        m = sp.csr_matrix((vals.ravel()[keep], (rows[keep], cols[keep])), shape=shape)
        m.eliminate_zeros()
        return m

    pi_u = build(lam)
    pi_grad = tuple(build(geo.grad[t][:, :, d]) for d in range(2))
    pts = w_space.dof_coords[wdofs]
    return InterpolationOps(pi_u, pi_grad, pts, w_space, v_space)

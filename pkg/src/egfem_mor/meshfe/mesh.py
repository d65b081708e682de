"""Two-dimensional triangulations with boundary marking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from ..errors import InvalidParameter, MalformedFile


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def signed_areas(nodes, triangles):
    p0 = nodes[triangles[:, 0]]
    d1 = nodes[triangles[:, 1]] - p0
    d2 = nodes[triangles[:, 2]] - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def boundary_edges_of(triangles):
    """Edges that belong to exactly one triangle, as sorted vertex pairs."""
    edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    edges = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MalformedFile("non-manifold triangulation: edge shared by >2 triangles")
    return uniq[counts == 1]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Counterclockwise-oriented triangulation of a polygonal domain.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (T, 3) int array
    boundary_edges : (B, 2) int array, each pair sorted ascending
    boundary_nodes : sorted int array of vertices on the boundary
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes, float))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64))
        object.__setattr__(
            self, "boundary_nodes", _frozen(np.unique(self.boundary_edges), np.int64)
        )

    @classmethod
    def from_arrays(cls, nodes, triangles, boundary_edges=None):
        """Build a mesh, repairing orientation and deriving the boundary.

        Clockwise triangles are reordered; degenerate ones raise
        :class:`MalformedFile`. When ``boundary_edges`` is omitted the boundary
        is found topologically.
        """
        nodes = np.asarray(nodes, dtype=float)
        tris = np.array(triangles, dtype=np.int64, copy=True)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MalformedFile("nodes must have shape (N, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MalformedFile("triangles must have shape (T, 3)")
        if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
            raise MalformedFile("triangle vertex index out of range")
        area = signed_areas(nodes, tris)
        scale = np.ptp(nodes, axis=0).max() if len(nodes) else 1.0
        if np.any(np.abs(area) <= 1e-14 * scale**2):
            raise MalformedFile("degenerate triangle with zero area")
        cw = area < 0
        tris[cw] = tris[cw][:, [0, 2, 1]]

        topo = boundary_edges_of(tris)
        if boundary_edges is None:
            bedges = topo
        else:
            bedges = np.sort(np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2), axis=1)
            bedges = np.unique(bedges, axis=0)
            topo_set = {tuple(e) for e in topo}
            if any(tuple(e) not in topo_set for e in bedges):
                raise MalformedFile("boundary edge not on the boundary of exactly one triangle")
        return cls(nodes, tris, bedges)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def areas(self):
        return signed_areas(self.nodes, self.triangles)

    def edges(self):
        """Unique edges (sorted pairs, lexicographic order) and the per-triangle
        edge indices for local edges (0,1), (1,2), (2,0)."""
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
        return uniq, inverse.reshape(-1, 3)

    def fingerprint(self):
        """Stable content hash, used as a cache key."""
        import hashlib

        h = hashlib.sha256()
        h.update(self.nodes.tobytes())
        h.update(self.triangles.tobytes())
        return h.hexdigest()[:16]


def unit_square(n):
    """Structured mesh of [0, 1]^2 with ``n`` cells per side, each cell split
    along its lower-left to upper-right diagonal."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParameter(f"unit_square needs n >= 1, got {n!r}")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    tris = np.concatenate(
        [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])]
    )
    # interleave so the two halves of a cell are adjacent in element order
    order = np.arange(2 * n * n).reshape(2, -1).T.ravel()
    return Mesh.from_arrays(nodes, tris[order])


def unit_disk(h):
    """Quasi-uniform triangulation of the inscribed polygon of the unit disk.

    Boundary vertices are spaced by about ``h`` along the circle; interior
    vertices lie on concentric rings of spacing ``h``, and the whole point set
    is triangulated with Delaunay.
    """
    if not (isinstance(h, (int, float, np.floating)) and h > 0 and math.isfinite(h)):
        raise InvalidParameter(f"unit_disk needs h > 0, got {h!r}")
    n_rings = max(1, int(round(1.0 / h)))
    pts = [np.zeros((1, 2))]
    for k in range(1, n_rings + 1):
        r = k / n_rings
        m = max(6, int(math.ceil(2.0 * math.pi * r / h)))
        # stagger consecutive rings to avoid cocircular quadruples
        phase = 0.5 * (k % 2) * 2.0 * math.pi / m
        theta = phase + 2.0 * math.pi * np.arange(m) / m
        pts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
    nodes = np.concatenate(pts)
    tri = Delaunay(nodes)
    tris = tri.simplices
    area = signed_areas(nodes, tris)
    tris = tris[np.abs(area) > 1e-12 * h * h]
    return Mesh.from_arrays(nodes, tris)


def generate_mesh(shape, value=None):
    """Generate a mesh from ``("unit_square", n)`` / ``("unit_disk", h)``.

    ``shape`` may also be a string such as ``"unit_square:16"`` or a mapping
    with keys ``shape`` and ``n`` or ``h``.
    """
    if isinstance(shape, dict):
        name = shape.get("shape")
        value = shape.get("n", shape.get("h"))
    elif isinstance(shape, (tuple, list)):
        name, value = shape
    elif isinstance(shape, str) and ":" in shape:
        name, raw = shape.split(":", 1)
        value = float(raw) if name == "unit_disk" else int(raw)
    else:
        name = shape
    if name == "unit_square":
        return unit_square(value)
    if name == "unit_disk":
        return unit_disk(value)
    raise InvalidParameter(f"unknown mesh shape {name!r}")

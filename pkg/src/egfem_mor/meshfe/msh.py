"""Reader for Gmsh MSH 2.2 ASCII files (triangles and boundary lines)."""

from __future__ import annotations

import numpy as np

from ..errors import MalformedFile, UnsupportedFormat
from .mesh import Mesh

LINE = 1
TRIANGLE = 2


def _sections(lines):
    sections = {}
    name, body = None, []
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("$"):
            if name is None:
                name, body = line[1:], []
            elif line == f"$End{name}":
                sections.setdefault(name, body)
                name = None
            else:
                raise MalformedFile(f"unterminated section ${name}")
        elif name is not None:
            body.append(line)
    if name is not None:
        raise MalformedFile(f"unterminated section ${name}")
    return sections


def parse_msh(text):
    sections = _sections(text.splitlines())
    if "MeshFormat" not in sections or not sections["MeshFormat"]:
        raise MalformedFile("missing $MeshFormat section")
    header = sections["MeshFormat"][0].split()
    version = header[0]
    if not version.startswith("2."):
        raise UnsupportedFormat(f"MSH version {version} is not supported (need 2.2)")
    if len(header) > 1 and header[1] != "0":
        raise UnsupportedFormat("binary MSH files are not supported")
    for needed in ("Nodes", "Elements"):
        if needed not in sections:
            raise MalformedFile(f"missing ${needed} section")

    node_lines = sections["Nodes"]
    try:
        n_nodes = int(node_lines[0])
        if len(node_lines) - 1 != n_nodes:
            raise MalformedFile(
                f"$Nodes declares {n_nodes} nodes but lists {len(node_lines) - 1}"
            )
        ids = np.empty(n_nodes, dtype=np.int64)
        xy = np.empty((n_nodes, 2))
        for r, line in enumerate(node_lines[1:]):
            parts = line.split()
            ids[r] = int(parts[0])
            xy[r] = float(parts[1]), float(parts[2])
    except (ValueError, IndexError) as exc:
        raise MalformedFile(f"bad $Nodes entry: {exc}") from None
    index_of = {int(i): r for r, i in enumerate(ids)}
    if len(index_of) != n_nodes:
        raise MalformedFile("duplicate node ids")

    elem_lines = sections["Elements"]
    tris, lines = [], []
    try:
        n_elems = int(elem_lines[0])
        if len(elem_lines) - 1 != n_elems:
            raise MalformedFile(
                f"$Elements declares {n_elems} elements but lists {len(elem_lines) - 1}"
            )
        for line in elem_lines[1:]:
            parts = [int(p) for p in line.split()]
            etype, ntags = parts[1], parts[2]
            verts = parts[3 + ntags:]
            if etype == TRIANGLE:
                tris.append([index_of[v] for v in verts[:3]])
            elif etype == LINE:
                lines.append([index_of[v] for v in verts[:2]])
    except KeyError as exc:
        raise MalformedFile(f"element references unknown node {exc}") from None
    except (ValueError, IndexError) as exc:
        raise MalformedFile(f"bad $Elements entry: {exc}") from None
    if not tris:
        raise MalformedFile("no triangle elements")

    tris = np.asarray(tris, dtype=np.int64)
    # drop geometry-only nodes that no triangle references
    used = np.unique(tris)
    renumber = -np.ones(n_nodes, dtype=np.int64)
    renumber[used] = np.arange(len(used))
    bedges = None
    if lines:
        lines = np.asarray(lines, dtype=np.int64)
        if np.any(renumber[lines] < 0):
            raise MalformedFile("line element does not touch the triangulation")
        bedges = renumber[lines]
    return Mesh.from_arrays(xy[used], renumber[tris], bedges)


def load_msh(path):
    """Read a Gmsh MSH 2.2 ASCII mesh.

    Physical tags are ignored. Line elements, when present, must lie on the
    topological boundary; otherwise the boundary is inferred from the
    triangles alone.
    """
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        return parse_msh(fh.read())


def write_msh(mesh, path):
    """Write ``mesh`` as MSH 2.2 ASCII (used for round-trip tests and export)."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_nodes)]
    out += [f"{i + 1} {float(x)!r} {float(y)!r} 0" for i, (x, y) in enumerate(mesh.nodes)]
    out += ["$EndNodes", "$Elements", str(len(mesh.boundary_edges) + mesh.n_triangles)]
    eid = 1
    for a, b in mesh.boundary_edges:
        out.append(f"{eid} 1 2 1 1 {a + 1} {b + 1}")
        eid += 1
    for a, b, c in mesh.triangles:
        out.append(f"{eid} 2 2 2 1 {a + 1} {b + 1} {c + 1}")
        eid += 1
    out.append("$EndElements")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")

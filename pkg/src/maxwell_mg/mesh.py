"""Simplicial meshes for the cavity benchmarks.

Structured box grids are split into simplices with the Kuhn (Freudenthal)
pattern: 6 tetrahedra per hexahedron sharing the main diagonal, 2 triangles
per square. Refinement is red (2**d children) for uniform refinement and
red/green with a conforming closure for refinement toward a line.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "DomainKind",
    "DomainSpec",
    "Mesh",
    "MeshFormatError",
    "generate_mesh",
    "refine_uniform",
    "refine_toward_edge",
    "refine_marked",
    "read_mesh",
    "write_mesh",
    "mesh_io",
    "LOCAL_EDGES",
    "REENTRANT_EDGE",
]

# local edge (a, b) numbering per simplex dimension
LOCAL_EDGES = {
    2: np.array([[0, 1], [0, 2], [1, 2]]),
    3: np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]),
}

# local faces, face i is opposite local vertex i
_LOCAL_FACES = {
    2: np.array([[1, 2], [0, 2], [0, 1]]),
    3: np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]),
}

# local edge indices lying in face i (opposite vertex i), tetrahedra only
_FACE_EDGES = np.array([[3, 4, 5], [1, 2, 5], [0, 2, 4], [0, 1, 3]])

_EDGE_LOOKUP = np.full((4, 4), -1, dtype=np.int64)
for _i, (_a, _b) in enumerate(LOCAL_EDGES[3]):
    _EDGE_LOOKUP[_a, _b] = _EDGE_LOOKUP[_b, _a] = _i

# reentrant edge of the thick L-shaped domain
REENTRANT_EDGE = ((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))


class DomainKind(enum.Enum):
    UnitCube = "UnitCube"
    ThickL = "ThickL"
    Slab = "Slab"
    CubeCavity = "CubeCavity"
    UnitSquare2D = "UnitSquare2D"


@dataclass(frozen=True)
class DomainSpec:
    """Benchmark domain. ``parameters`` holds named reals (Slab: ``thickness``)."""

    kind: DomainKind
    parameters: dict = field(default_factory=dict)

    @classmethod
    def from_name(cls, name: str, **parameters) -> "DomainSpec":
        try:
            kind = DomainKind(name)
        except ValueError:
            raise ValueError(f"unknown domain kind {name!r}") from None
        return cls(kind, dict(parameters))

    @property
    def dimension(self) -> int:
        return 2 if self.kind is DomainKind.UnitSquare2D else 3


class MeshFormatError(ValueError):
    """Raised for malformed mesh files; carries the offending line number."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh.

    Attributes
    ----------
    vertices : (nv, d) float array
    cells : (nc, d+1) int array, positively oriented
    region_id : (nc,) int array of material labels
    boundary_faces : (nbf, d) int array, each row sorted ascending
    parent : the mesh this one refines, if any
    parent_cell : (nc,) index of the parent cell of every cell
    """

    vertices: np.ndarray
    cells: np.ndarray
    region_id: np.ndarray
    boundary_faces: np.ndarray
    parent: Optional["Mesh"] = None
    parent_cell: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("vertices", "cells", "region_id", "boundary_faces", "parent_cell"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def level(self) -> int:
        return 0 if self.parent is None else self.parent.level + 1

    def signed_volumes(self) -> np.ndarray:
        return _signed_volumes(self.vertices, self.cells)

    def volumes(self) -> np.ndarray:
        return np.abs(self.signed_volumes())

    def diameters(self) -> np.ndarray:
        """Longest edge length of every cell."""
        x = self.vertices[self.cells]
        le = LOCAL_EDGES[self.dimension]
        return np.linalg.norm(x[:, le[:, 1]] - x[:, le[:, 0]], axis=2).max(axis=1)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted edges and the (nc, n_local_edges) cell-to-edge map."""
        return _edges(self.cells, self.dimension)

    def faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted (d-1)-faces and how many cells contain each."""
        f = np.sort(self.cells[:, _LOCAL_FACES[self.dimension]].reshape(-1, self.dimension), axis=1)
        return np.unique(f, axis=0, return_counts=True)

    def check_conformity(self) -> bool:
        """No face shared by more than two cells, the once-used faces are
        exactly ``boundary_faces``, and no vertex hangs on an edge."""
        faces, counts = self.faces()
        if np.any(counts > 2):
            return False
        outer = faces[counts == 1]
        declared = np.unique(np.sort(self.boundary_faces, axis=1), axis=0)
        if outer.shape != declared.shape or not np.array_equal(outer, declared):
            return False
        return _no_hanging_vertices(self)

    def boundary_components(self) -> int:
        """Number of connected components of the boundary surface."""
        bf = self.boundary_faces
        if len(bf) == 0:
            return 0
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        nbf, k = bf.shape
        rows = np.repeat(np.arange(nbf), k)
        adj = coo_matrix((np.ones(nbf * k), (rows, bf.ravel())), shape=(nbf, self.n_vertices))
        n, _ = connected_components((adj @ adj.T).tocsr(), directed=False)
        return n


def _signed_volumes(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    x = vertices[cells]
    jac = x[:, 1:] - x[:, :1]
    return np.linalg.det(jac) / math.factorial(vertices.shape[1])


def _edges(cells: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    le = LOCAL_EDGES[dim]
    pairs = np.sort(cells[:, le].reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    return edges, inverse.reshape(cells.shape[0], le.shape[0])


def _no_hanging_vertices(mesh: Mesh) -> bool:
    edges, _ = mesh.edges()
    x = mesh.vertices
    mid = 0.5 * (x[edges[:, 0]] + x[edges[:, 1]])
    scale = np.abs(x).max() + 1.0
    keys = np.round(np.vstack([x, mid]) / scale, 11)
    _, counts = np.unique(keys, axis=0, return_counts=True)
    # vertices are distinct and so are edge midpoints; a repeat means a vertex on an edge
    return not np.any(counts > 1)


def _boundary_faces(cells: np.ndarray, dim: int) -> np.ndarray:
    f = np.sort(cells[:, _LOCAL_FACES[dim]].reshape(-1, dim), axis=1)
    faces, counts = np.unique(f, axis=0, return_counts=True)
    return faces[counts == 1]


def _orient(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Swap two local vertices of every negatively oriented cell."""
    cells = cells.copy()
    vol = _signed_volumes(vertices, cells)
    if np.any(np.abs(vol) <= 1e-14 * np.abs(vol).max()):
        raise ValueError("degenerate cell")
    neg = vol < 0
    i, j = (0, 2) if vertices.shape[1] == 3 else (1, 2)
    cells[neg, i], cells[neg, j] = cells[neg, j], cells[neg, i].copy()
    return cells


# ----------------------------------------------------------------------------
# structured generation

def _kuhn_cells(shape: tuple[int, ...], keep: np.ndarray, mirrored: bool = True) -> np.ndarray:
    """Kuhn simplices of the kept boxes of a structured grid of ``shape`` boxes.

    With ``mirrored`` every box with an odd index along an axis is reflected
    across that axis, so the mesh is symmetric under the reflections and axis
    permutations of the grid.
    """
    d = len(shape)
    nodes = tuple(n + 1 for n in shape)
    boxes = np.argwhere(keep)
    flip = boxes % 2 if mirrored else np.zeros_like(boxes)
    per_perm = []
    for perm in itertools.permutations(range(d)):
        path = [np.zeros(d, dtype=int)]
        for ax in perm:
            step = path[-1].copy()
            step[ax] = 1
            path.append(step)
        per_perm.append(np.stack(
            [np.ravel_multi_index(tuple((boxes + np.abs(p - flip)).T), nodes) for p in path], axis=1))
    # the d! simplices of a box stay adjacent in the cell list
    return np.stack(per_perm, axis=1).reshape(-1, d + 1)


def _box_mesh(lo, hi, shape, keep=None, region_fn=None, mirrored=True) -> Mesh:
    d = len(shape)
    if keep is None:
        keep = np.ones(shape, dtype=bool)
    axes = [np.linspace(lo[i], hi[i], shape[i] + 1) for i in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    cells = _kuhn_cells(tuple(shape), keep, mirrored)
    used, cells = np.unique(cells, return_inverse=True)
    cells = cells.reshape(-1, d + 1)
    vertices = grid[used]
    cells = _orient(vertices, cells)
    if region_fn is None:
        region = np.zeros(len(cells), dtype=np.int64)
    else:
        region = region_fn(vertices[cells].mean(axis=1)).astype(np.int64)
    return Mesh(vertices, cells, region, _boundary_faces(cells, d))


def generate_mesh(spec: DomainSpec, resolution: int) -> Mesh:
    """Structured simplicial mesh of a benchmark domain.

    ``resolution`` is the number of boxes per unit length (for UnitCube and
    UnitSquare2D: per side). CubeCavity and Slab need an even resolution so
    that the hole and the material interface fall on grid planes.

    The parameter ``pattern`` of ``spec`` selects the box subdivision:
    ``"mirrored"`` (default, reflection-symmetric) or ``"kuhn"`` (every box
    split the same way). Both are reproduced by :func:`refine_uniform`.
    """
    if isinstance(spec, str):
        spec = DomainSpec.from_name(spec)
    if isinstance(resolution, bool) or not isinstance(resolution, (int, np.integer)) or resolution < 1:
        raise ValueError(f"resolution must be a positive integer, got {resolution!r}")
    n = int(resolution)
    kind = spec.kind
    pattern = spec.parameters.get("pattern", "mirrored")
    if pattern not in ("mirrored", "kuhn"):
        raise ValueError(f"unknown subdivision pattern {pattern!r}")
    mir = pattern == "mirrored"
    if kind is DomainKind.UnitCube:
        return _box_mesh([-0.5] * 3, [0.5] * 3, (n, n, n), mirrored=mir)
    if kind is DomainKind.UnitSquare2D:
        return _box_mesh([0.0, 0.0], [1.0, 1.0], (n, n), mirrored=mir)
    if kind is DomainKind.ThickL:
        shape = (2 * n, 2 * n, n)
        keep = np.ones(shape, dtype=bool)
        keep[:n, :n, :] = False
        return _box_mesh([-1.0, -1.0, 0.0], [1.0, 1.0, 1.0], shape, keep, mirrored=mir)
    if kind is DomainKind.CubeCavity:
        if n % 2:
            raise ValueError("CubeCavity needs an even resolution")
        shape = (2 * n,) * 3
        keep = np.ones(shape, dtype=bool)
        a, b = n // 2, n // 2 + n
        keep[a:b, a:b, a:b] = False
        return _box_mesh([-1.0] * 3, [1.0] * 3, shape, keep, mirrored=mir)
    if kind is DomainKind.Slab:
        t = float(spec.parameters.get("thickness", 0.1))
        if not t > 0:
            raise ValueError("Slab thickness must be positive")
        if n % 2:
            raise ValueError("Slab needs an even resolution")
        ny = max(1, int(round(t * n)))
        return _box_mesh([-0.5, 0.0, -0.5], [0.5, t, 0.5], (n, ny, n),
                         region_fn=lambda c: c[:, 2] > 0, mirrored=mir)
    raise ValueError(f"unknown domain kind {kind!r}")


# ----------------------------------------------------------------------------
# refinement

def _close_marks(cell_edges: np.ndarray, marked: np.ndarray, dim: int) -> np.ndarray:
    """Grow the edge marking until every cell pattern is refinable.

    Admissible tetrahedron patterns: nothing, one edge, the three edges of one
    face, all six edges. Triangles: nothing, one edge, all three.
    """
    marked = marked.copy()
    while True:
        pat = marked[cell_edges]
        k = pat.sum(axis=1)
        add = np.zeros_like(pat)
        if dim == 2:
            add[k >= 2] = True
        else:
            in_face = np.stack([pat[:, fe].sum(axis=1) == k for fe in _FACE_EDGES], axis=1)
            multi = (k >= 2) & (k < 6)
            face_ok = multi & (k <= 3) & in_face.any(axis=1)
            add[multi & ~face_ok] = True
            rows = np.nonzero(face_ok)[0]
            f = in_face[rows].argmax(axis=1)
            for j in range(3):
                add[rows, _FACE_EDGES[f, j]] = True
        new = cell_edges[add & ~pat]
        if new.size == 0:
            return marked
        marked[new] = True


def _red_children_3d(c: np.ndarray, m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Red subdivision of tetrahedra ``c`` (nc, 4) with edge midpoints ``m`` (nc, 6).

    The interior diagonal is the shortest of the three. Each diagonal joins
    the midpoints of a pair of opposite edges; ties go to the pair with the
    largest total length. The rule is metric only, so it commutes with
    reflections, and on Kuhn tetrahedra it reproduces the half-size Kuhn
    subdivision (mirrored or not) at every level.
    """
    m01, m02, m03, m12, m13, m23 = (m[:, i] for i in range(6))
    v0, v1, v2, v3 = (c[:, i] for i in range(4))
    diag = np.stack([
        np.linalg.norm(x[m02] - x[m13], axis=1),
        np.linalg.norm(x[m03] - x[m12], axis=1),
        np.linalg.norm(x[m01] - x[m23], axis=1),
    ], axis=1)
    length = lambda a, b: np.linalg.norm(x[a] - x[b], axis=1)  # noqa: E731
    pair = np.stack([
        length(v0, v2) + length(v1, v3),
        length(v0, v3) + length(v1, v2),
        length(v0, v1) + length(v2, v3),
    ], axis=1)
    scale = diag.min(axis=1, keepdims=True)
    tied = diag <= scale * (1 + 1e-10)
    score = np.where(tied, pair, -np.inf)
    best = score >= score.max(axis=1, keepdims=True) - 1e-10 * scale
    choice = np.argmax(best, axis=1)

    corners = np.stack([
        np.stack([v0, m01, m02, m03], 1),
        np.stack([m01, v1, m12, m13], 1),
        np.stack([m02, m12, v2, m23], 1),
        np.stack([m03, m13, m23, v3], 1),
    ], axis=1)
    # diagonal (a, b) and the cycle p1 q1 p2 q2 around it
    options = [
        (m02, m13, m01, m03, m23, m12),
        (m03, m12, m01, m02, m23, m13),
        (m01, m23, m02, m03, m13, m12),
    ]
    inner = np.empty((len(c), 4, 4), dtype=c.dtype)
    for k, opt in enumerate(options):
        sel = choice == k
        if not sel.any():
            continue
        a, b, p1, q1, p2, q2 = (v[sel] for v in opt)
        inner[sel] = np.stack([
            np.stack([a, p1, q1, b], 1),
            np.stack([a, q1, p2, b], 1),
            np.stack([a, p2, q2, b], 1),
            np.stack([a, q2, p1, b], 1),
        ], axis=1)
    return np.concatenate([corners, inner], axis=1)


def refine_marked(mesh: Mesh, marked_edges: np.ndarray) -> Mesh:
    """Split every marked edge (after closure) and return the nested child mesh."""
    d = mesh.dimension
    edges, cell_edges = mesh.edges()
    marked = _close_marks(cell_edges, np.asarray(marked_edges, dtype=bool), d)
    nv = mesh.n_vertices
    mid_index = np.full(len(edges), -1, dtype=np.int64)
    mid_index[marked] = nv + np.arange(marked.sum())
    xm = 0.5 * (mesh.vertices[edges[marked, 0]] + mesh.vertices[edges[marked, 1]])
    x = np.vstack([mesh.vertices, xm])

    c = mesh.cells
    pat = marked[cell_edges]
    k = pat.sum(axis=1)
    m = mid_index[cell_edges]
    children, parents = [], []

    untouched = np.nonzero(k == 0)[0]
    children.append(c[untouched])
    parents.append(untouched)

    full = np.nonzero(k == len(LOCAL_EDGES[d]))[0]
    if len(full):
        if d == 3:
            kids = _red_children_3d(c[full], m[full], x)
        else:
            v0, v1, v2 = c[full].T
            m01, m02, m12 = m[full].T
            kids = np.stack([
                np.stack([v0, m01, m02], 1),
                np.stack([m01, v1, m12], 1),
                np.stack([m02, m12, v2], 1),
                np.stack([m01, m12, m02], 1),
            ], axis=1)
        children.append(kids.reshape(-1, d + 1))
        parents.append(np.repeat(full, kids.shape[1]))

    single = np.nonzero(k == 1)[0]
    if len(single):
        le = LOCAL_EDGES[d]
        which = pat[single].argmax(axis=1)
        mid = m[single, which]
        rows = np.arange(len(single))
        first = c[single].copy()
        first[rows, le[which, 1]] = mid
        second = c[single].copy()
        second[rows, le[which, 0]] = mid
        children.append(np.stack([first, second], axis=1).reshape(-1, d + 1))
        parents.append(np.repeat(single, 2))

    if d == 3:
        face = np.nonzero(k == 3)[0]
        if len(face):
            # red-refine the marked face, cone the four triangles to the apex
            fpat = np.stack([pat[face][:, fe].all(axis=1) for fe in _FACE_EDGES], axis=1)
            apex_loc = fpat.argmax(axis=1)
            rows = np.arange(len(face))
            cf, mf = c[face], m[face]
            apex = cf[rows, apex_loc]
            fv = _LOCAL_FACES[3][apex_loc]
            a, b, cc = (cf[rows, fv[:, i]] for i in range(3))
            mab = mf[rows, _EDGE_LOOKUP[fv[:, 0], fv[:, 1]]]
            mac = mf[rows, _EDGE_LOOKUP[fv[:, 0], fv[:, 2]]]
            mbc = mf[rows, _EDGE_LOOKUP[fv[:, 1], fv[:, 2]]]
            kids = np.stack([
                np.stack([a, mab, mac, apex], 1),
                np.stack([mab, b, mbc, apex], 1),
                np.stack([mac, mbc, cc, apex], 1),
                np.stack([mab, mbc, mac, apex], 1),
            ], axis=1)
            children.append(kids.reshape(-1, 4))
            parents.append(np.repeat(face, 4))

    cells = np.concatenate(children).astype(np.int64)
    parent_cell = np.concatenate(parents).astype(np.int64)
    order = np.argsort(parent_cell, kind="stable")
    cells, parent_cell = _orient(x, cells[order]), parent_cell[order]
    return Mesh(
        vertices=x,
        cells=cells,
        region_id=mesh.region_id[parent_cell].copy(),
        boundary_faces=_boundary_faces(cells, d),
        parent=mesh,
        parent_cell=parent_cell,
    )


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: every simplex split into 2**d children."""
    edges, _ = mesh.edges()
    return refine_marked(mesh, np.ones(len(edges), dtype=bool))


def _distance_to_segment(points: np.ndarray, a, b) -> np.ndarray:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    ab = b - a
    t = np.clip((points - a) @ ab / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def refine_toward_edge(mesh: Mesh, axis_line=REENTRANT_EDGE, ratio: float = 0.1,
                       passes: int = 1) -> Mesh:
    """Graded local refinement toward a segment.

    Pass ``p`` red-refines every cell having a vertex closer than
    ``ratio * 2**-p * L`` to the segment (``L``: bounding-box diameter of the
    input mesh); the red/green closure keeps the result conforming. Every pass
    yields a nested level and the last one is returned.
    """
    if mesh.dimension != 3:
        raise ValueError("refine_toward_edge needs a 3D mesh")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    a, b = axis_line
    extent = float(np.linalg.norm(mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)))
    for p in range(passes):
        radius = ratio * 0.5 ** p * extent
        dist = _distance_to_segment(mesh.vertices, a, b)[mesh.cells].min(axis=1)
        edges, cell_edges = mesh.edges()
        marked = np.zeros(len(edges), dtype=bool)
        marked[cell_edges[dist < radius].ravel()] = True
        mesh = refine_marked(mesh, marked)
        if not mesh.check_conformity():  # pragma: no cover - internal bug signal
            raise RuntimeError("local refinement closure produced a non-conforming mesh")
    return mesh


# ----------------------------------------------------------------------------
# ASCII mesh format
#
#   dim nv nc nbf
#   nv lines:  x y [z]
#   nc lines:  v0 ... vd region
#   nbf lines: v0 ... v(d-1)

def write_mesh(mesh: Mesh, path) -> None:
    lines = [f"{mesh.dimension} {mesh.n_vertices} {mesh.n_cells} {len(mesh.boundary_faces)}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in mesh.vertices]
    lines += [" ".join(str(int(v)) for v in row) + f" {int(r)}"
              for row, r in zip(mesh.cells, mesh.region_id)]
    lines += [" ".join(str(int(v)) for v in row) for row in mesh.boundary_faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, dimension: Optional[int] = None) -> Mesh:
    text = Path(path).read_text().splitlines()
    if not text:
        raise MeshFormatError("empty file, missing header", 1)
    try:
        d, nv, nc, nbf = (int(t) for t in text[0].split())
    except ValueError:
        raise MeshFormatError("header must be 'dim nv nc nbf'", 1) from None
    if d not in (2, 3):
        raise MeshFormatError(f"unsupported dimension {d}", 1)
    if dimension is not None and d != dimension:
        raise MeshFormatError(f"dimension mismatch: file has {d}, expected {dimension}", 1)

    sections = [("vertices", nv, d, float), ("cells", nc, d + 2, int),
                ("boundary faces", nbf, d, int)]
    pos = 1
    parsed = []
    for name, count, width, typ in sections:
        rows = []
        for i in range(count):
            lineno = pos + i + 1
            if pos + i >= len(text):
                raise MeshFormatError(
                    f"unexpected end of file in {name} section ({i} of {count} lines read)", lineno)
            tok = text[pos + i].split()
            if len(tok) != width:
                raise MeshFormatError(f"{name} line needs {width} fields, got {len(tok)}", lineno)
            try:
                rows.append([typ(t) for t in tok])
            except ValueError:
                raise MeshFormatError(f"bad number in {name} section", lineno) from None
        pos += count
        dtype = np.float64 if typ is float else np.int64
        parsed.append(np.array(rows, dtype=dtype).reshape(count, width))
    vertices, cr, bf = parsed
    cells, region = cr[:, :-1], cr[:, -1]
    if cells.size and (cells.min() < 0 or cells.max() >= nv):
        raise MeshFormatError("cell references a missing vertex")
    return Mesh(vertices, cells, region, bf)


def mesh_io(mesh: Optional[Mesh], path, direction: str = "read"):
    """Read or write the ASCII format; ``mesh`` supplies the expected dimension on read."""
    if direction == "write":
        write_mesh(mesh, path)
        return None
    if direction == "read":
        return read_mesh(path, None if mesh is None else mesh.dimension)
    raise ValueError("direction must be 'read' or 'write'")

"""Edge and vertex DOF numbering for lowest-order edge elements."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import LOCAL_EDGES, Mesh

__all__ = ["EdgeTopology", "build_topology"]


@dataclass(frozen=True, eq=False)
class EdgeTopology:
    """Global edge enumeration of a mesh.

    ``edges[e] = (i, j)`` with ``i < j``; ``cell_edge_sign[c, k]`` is +1 when
    local edge ``k`` of cell ``c`` (running from its lower to its higher local
    vertex) points the same way as the global edge. ``free_edge_index`` and
    ``free_vertex_index`` map global entities to free DOF numbers (-1 on the
    boundary), ``free_edges`` / ``free_vertices`` go the other way.
    """

    mesh: Mesh
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_sign: np.ndarray
    boundary_edge: np.ndarray
    boundary_vertex: np.ndarray
    free_edges: np.ndarray
    free_vertices: np.ndarray
    free_edge_index: np.ndarray
    free_vertex_index: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_free_edges(self) -> int:
        return len(self.free_edges)

    @property
    def n_free_vertices(self) -> int:
        return len(self.free_vertices)

    @property
    def cell_to_edge(self) -> list[list[tuple[int, int]]]:
        """Per cell, the (edge index, sign) pairs in local edge order."""
        return [list(zip(map(int, e), map(int, s)))
                for e, s in zip(self.cell_edges, self.cell_edge_sign)]


def build_topology(mesh: Mesh) -> EdgeTopology:
    d = mesh.dimension
    le = LOCAL_EDGES[d]
    c = mesh.cells
    tail, head = c[:, le[:, 0]], c[:, le[:, 1]]
    edges, cell_edges = mesh.edges()
    sign = np.where(tail < head, 1, -1).astype(np.int8)

    bf = mesh.boundary_faces
    boundary_vertex = np.zeros(mesh.n_vertices, dtype=bool)
    boundary_vertex[bf.ravel()] = True
    boundary_edge = np.zeros(len(edges), dtype=bool)
    if len(bf):
        fl = LOCAL_EDGES[d - 1] if d == 3 else np.array([[0, 1]])
        pairs = np.sort(bf[:, fl].reshape(-1, 2), axis=1)
        # locate boundary face edges in the sorted edge list
        key = edges[:, 0] * mesh.n_vertices + edges[:, 1]
        pkey = pairs[:, 0] * mesh.n_vertices + pairs[:, 1]
        boundary_edge[np.searchsorted(key, pkey)] = True

    free_edges = np.nonzero(~boundary_edge)[0]
    free_vertices = np.nonzero(~boundary_vertex)[0]
    fei = np.full(len(edges), -1, dtype=np.int64)
    fei[free_edges] = np.arange(len(free_edges))
    fvi = np.full(mesh.n_vertices, -1, dtype=np.int64)
    fvi[free_vertices] = np.arange(len(free_vertices))
    topo = EdgeTopology(mesh, edges, cell_edges, sign, boundary_edge, boundary_vertex,
                        free_edges, free_vertices, fei, fvi)
    for arr in (edges, cell_edges, sign, boundary_edge, boundary_vertex,
                free_edges, free_vertices, fei, fvi):
        arr.setflags(write=False)
    return topo

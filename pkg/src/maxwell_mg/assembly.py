"""Lowest-order edge element operators.

Whitney edge functions ``W_ab = l_a grad l_b - l_b grad l_a`` span the edge
space, nodal hat functions the scalar space. Boundary DOFs (tangential trace
and scalar values on the boundary) are eliminated by dropping rows/columns.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import kernels
from .materials import MaterialMap, coercivity_constants
from .mesh import LOCAL_EDGES, Mesh
from .quadrature import simplex_rule
from .sparse import SparseMatrix, write_triplets
from .topology import EdgeTopology, build_topology

__all__ = [
    "AssembledOperators",
    "AssemblyError",
    "assemble_operators",
    "assemble_level",
    "discrete_gradient",
    "edge_prolongation",
    "vertex_prolongation",
    "interpolate_to_fine",
]

DROP_TOL = 1e-14


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AssembledOperators:
    """Matrices over the free DOFs of one mesh level.

    S[i, j] = (mu^-1 curl W_j, curl W_i), M[i, j] = (eps W_j, W_i),
    B[p, i] = (eps W_i, grad phi_p), and G the discrete gradient with
    grad phi_p = sum_e G[e, p] W_e.
    """

    S: SparseMatrix
    M: SparseMatrix
    B: SparseMatrix
    G: SparseMatrix
    topology: EdgeTopology
    materials: MaterialMap
    degree: int = 0

    @property
    def mesh(self) -> Mesh:
        return self.topology.mesh

    @property
    def n_edge(self) -> int:
        return self.S.shape[0]

    @property
    def n_vertex(self) -> int:
        return self.B.shape[0]

    @property
    def shift(self) -> float:
        """gamma / beta, the weight of the mass term in the A-norm."""
        return coercivity_constants(self.materials).shift

    def a_norm(self, u) -> float:
        return float(np.sqrt(max(np.vdot(u, self.S @ u).real, 0.0)))

    def m_norm(self, u) -> float:
        return float(np.sqrt(np.vdot(u, self.M @ u).real))

    def big_a_norm(self, u) -> float:
        """||u||_A^2 = a(u, u) + (gamma/beta) (eps u, u)."""
        return float(np.sqrt(np.vdot(u, self.S @ u).real + self.shift * np.vdot(u, self.M @ u).real))

    def dump(self, directory) -> None:
        """Write S, M, B, G as triplet text files into ``directory``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for name in ("S", "M", "B", "G"):
            write_triplets(getattr(self, name), out / f"{name}.txt")


def _region_index(mesh: Mesh, materials: MaterialMap) -> tuple[np.ndarray, list[int]]:
    regions = materials.regions
    missing = sorted(set(np.unique(mesh.region_id).tolist()) - set(regions))
    if missing:
        raise AssemblyError(f"region id(s) {missing} missing from materials")
    idx = np.searchsorted(np.asarray(regions), mesh.region_id).astype(np.int64)
    return np.ascontiguousarray(idx), regions


def _restricted(rows, cols, vals, row_map, col_map, shape) -> SparseMatrix:
    r = row_map[rows.ravel()]
    c = col_map[cols.ravel()]
    v = vals.ravel()
    keep = (r >= 0) & (c >= 0)
    return SparseMatrix.from_triplets(r[keep], c[keep], v[keep], shape, drop_tol=DROP_TOL)


def discrete_gradient(topo: EdgeTopology) -> SparseMatrix:
    """G[e, p] = -1 at the tail vertex of edge e, +1 at its head (free DOFs only)."""
    ne = len(topo.edges)
    rows = np.repeat(np.arange(ne), 2)
    cols = topo.edges.ravel()
    vals = np.tile([-1.0, 1.0], ne)
    return _restricted(rows, cols, vals, topo.free_edge_index, topo.free_vertex_index,
                       (topo.n_free_edges, topo.n_free_vertices))


def assemble_operators(mesh: Mesh, topo: EdgeTopology, materials: MaterialMap,
                       backend: Optional[str] = None) -> AssembledOperators:
    """Element-by-element assembly of S, M, B and G."""
    if topo.mesh is not mesh:
        raise AssemblyError("topology was built for a different mesh")
    if materials.dimension != mesh.dimension:
        raise AssemblyError("material dimension does not match the mesh")
    d = mesh.dimension
    le = LOCAL_EDGES[d]
    region, regions = _region_index(mesh, materials)
    mu_inv, eps = materials.stacked(regions)
    impl = kernels.backend(backend)
    S_loc, M_loc, vol = impl.whitney_local(
        np.ascontiguousarray(mesh.vertices, dtype=np.float64),
        np.ascontiguousarray(mesh.cells, dtype=np.int64),
        region, np.ascontiguousarray(mu_inv), np.ascontiguousarray(eps), le)
    if np.any(vol <= 1e-14 * vol.max()):
        raise AssemblyError("degenerate cell")
    s = topo.cell_edge_sign.astype(float)
    ss = s[:, :, None] * s[:, None, :]
    ce = topo.cell_edges
    rows = np.broadcast_to(ce[:, :, None], S_loc.shape)
    cols = np.broadcast_to(ce[:, None, :], S_loc.shape)
    nfe, nfv = topo.n_free_edges, topo.n_free_vertices
    fe = topo.free_edge_index
    S = _restricted(rows, cols, S_loc * ss, fe, fe, (nfe, nfe))
    M = _restricted(rows, cols, M_loc * ss, fe, fe, (nfe, nfe))

    # B_loc[p, i] = integral of grad(l_p)^T eps W_i with the degree-2 rule
    grads, _ = kernels.barycentric_gradients(mesh.vertices, mesh.cells)
    lam, w = simplex_rule(d, 2)
    ga, gb = grads[:, le[:, 0]], grads[:, le[:, 1]]
    Wq = (lam[None, :, le[:, 0], None] * gb[:, None] - lam[None, :, le[:, 1], None] * ga[:, None])
    Wbar = np.einsum("q,cqid->cid", w, Wq)
    B_loc = np.einsum("cpk,ckl,cil->cpi", grads, eps[region], Wbar) * vol[:, None, None]
    B_loc = B_loc * s[:, None, :]
    brow = np.broadcast_to(mesh.cells[:, :, None], B_loc.shape)
    bcol = np.broadcast_to(ce[:, None, :], B_loc.shape)
    B = _restricted(brow, bcol, B_loc, topo.free_vertex_index, fe, (nfv, nfe))

    G = discrete_gradient(topo)
    return AssembledOperators(S, M, B, G, topo, materials)


def assemble_level(mesh: Mesh, materials: MaterialMap, backend: Optional[str] = None) -> AssembledOperators:
    return assemble_operators(mesh, build_topology(mesh), materials, backend)


# ----------------------------------------------------------------------------
# transfer between nested levels

def _check_nested(coarse: EdgeTopology, fine: EdgeTopology) -> None:
    if fine.mesh.parent is not coarse.mesh or fine.mesh.parent_cell is None:
        raise ValueError("meshes not nested: fine mesh is not a refinement of the coarse mesh")


def _barycentric_in(parent: Mesh, pcell: np.ndarray, points: np.ndarray, grads: np.ndarray) -> np.ndarray:
    x0 = parent.vertices[parent.cells[pcell, 0]]
    g = grads[pcell]  # (n, d+1, d)
    lam = np.einsum("nkd,nd->nk", g, points - x0)
    lam[:, 0] += 1.0
    return lam


def edge_prolongation(coarse: EdgeTopology, fine: EdgeTopology) -> SparseMatrix:
    """Edge-DOF interpolation of coarse Whitney fields onto the fine level.

    Fine coefficient = line integral of the coarse field along the fine edge,
    evaluated exactly as (tangent . value at midpoint) since the field is
    affine inside the parent cell.
    """
    _check_nested(coarse, fine)
    fm, cm = fine.mesh, coarse.mesh
    d = fm.dimension
    le = LOCAL_EDGES[d]
    ne_loc = le.shape[0]
    _, first = np.unique(fine.cell_edges.ravel(), return_index=True)
    fcell = first // ne_loc
    pcell = fm.parent_cell[fcell]
    e = fine.edges
    t = fm.vertices[e[:, 1]] - fm.vertices[e[:, 0]]
    mid = 0.5 * (fm.vertices[e[:, 0]] + fm.vertices[e[:, 1]])
    grads, _ = kernels.barycentric_gradients(cm.vertices, cm.cells)
    lam = _barycentric_in(cm, pcell, mid, grads)
    g = grads[pcell]
    gt = np.einsum("nkd,nd->nk", g, t)  # grad l_k . t
    a, b = le[:, 0], le[:, 1]
    vals = lam[:, a] * gt[:, b] - lam[:, b] * gt[:, a]
    vals = vals * coarse.cell_edge_sign[pcell]
    rows = np.repeat(np.arange(len(e))[:, None], ne_loc, axis=1)
    cols = coarse.cell_edges[pcell]
    vals[np.abs(vals) < 1e-13] = 0.0
    p = _restricted(rows, cols, vals, fine.free_edge_index, coarse.free_edge_index,
                    (fine.n_free_edges, coarse.n_free_edges))
    return p


def vertex_prolongation(coarse: EdgeTopology, fine: EdgeTopology) -> SparseMatrix:
    """Nodal interpolation of coarse piecewise linears onto the fine vertices."""
    _check_nested(coarse, fine)
    fm, cm = fine.mesh, coarse.mesh
    nloc = fm.dimension + 1
    _, first = np.unique(fm.cells.ravel(), return_index=True)
    pcell = fm.parent_cell[first // nloc]
    grads, _ = kernels.barycentric_gradients(cm.vertices, cm.cells)
    lam = _barycentric_in(cm, pcell, fm.vertices, grads)
    lam[np.abs(lam) < 1e-13] = 0.0
    rows = np.repeat(np.arange(fm.n_vertices)[:, None], nloc, axis=1)
    cols = cm.cells[pcell]
    return _restricted(rows, cols, lam, fine.free_vertex_index, coarse.free_vertex_index,
                       (fine.n_free_vertices, coarse.n_free_vertices))


def interpolate_to_fine(coarse_coeffs, coarse: EdgeTopology, fine: EdgeTopology) -> np.ndarray:
    """Represent a coarse edge-element field in the fine edge basis (exact for nested meshes)."""
    return edge_prolongation(coarse, fine) @ np.asarray(coarse_coeffs)

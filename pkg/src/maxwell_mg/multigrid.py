"""Multigrid eigenvalue schemes on a nested hierarchy.

After the coarse mixed eigensolve, every finer level costs one shifted
source solve ``(S - shift M) u' = M P u`` in the unconstrained edge space:

* ``RayleighQuotient``: the shift is the previous level's Rayleigh quotient;
* ``FixedShift``: the same until level ``i0``, then frozen at ``lam^{h_i0}``.

A target cluster of multiplicity q is carried as q vectors that are
M-orthonormalised (and rotated to Ritz vectors) after each level.
"""
from __future__ import annotations

import enum
import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla

from .assembly import AssembledOperators, assemble_level, edge_prolongation
from .eigen import EigenPairEstimate, SpectrumResult
from .materials import MaterialMap
from .mesh import Mesh, refine_uniform
from .solvers import DENSE_THRESHOLD, SingularMatrixError, SolveReport, minres, jacobi, solve_hermitian
from .sparse import SparseMatrix
from .topology import build_topology

__all__ = [
    "Scheme",
    "SchemeConfig",
    "SchemeError",
    "LevelSolveError",
    "Hierarchy",
    "build_hierarchy",
    "LevelRecord",
    "IterationTrace",
    "ShiftedSolution",
    "rayleigh_quotient",
    "shifted_solve",
    "run_scheme",
]


class Scheme(enum.Enum):
    RayleighQuotient = "RayleighQuotient"
    FixedShift = "FixedShift"


class SchemeError(ValueError):
    pass


class LevelSolveError(RuntimeError):
    def __init__(self, message: str, level: int, member: Optional[int] = None,
                 report: Optional[SolveReport] = None):
        super().__init__(f"level {level}: {message}")
        self.level = level
        self.member = member
        self.report = report


@dataclass(frozen=True)
class SchemeConfig:
    """``target`` is the 1-based index k of the first eigenvalue of the cluster
    (lam_k = ... = lam_{k+q-1}) and ``cluster_size`` its multiplicity q.
    ``tol`` is one relative residual for all levels or one value per fine level.
    """

    scheme: Scheme = Scheme.FixedShift
    levels: int = 0
    target: int = 1
    cluster_size: int = 1
    i0: int = 0
    tol: Union[float, Sequence[float]] = 1e-10
    max_iter: int = 5000
    ritz: bool = True
    dense_threshold: int = DENSE_THRESHOLD

    def __post_init__(self):
        if isinstance(self.scheme, str):
            object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.levels < 0:
            raise SchemeError("levels must be >= 0")
        if self.target < 1 or self.cluster_size < 1:
            raise SchemeError("target and cluster_size must be >= 1")
        if self.i0 < 0:
            raise SchemeError("i0 must be >= 0")
        if not isinstance(self.tol, (int, float)) and len(self.tol) != self.levels:
            raise SchemeError(f"need {self.levels} level tolerances, got {len(self.tol)}")

    def level_tol(self, i: int) -> float:
        return float(self.tol) if isinstance(self.tol, (int, float)) else float(self.tol[i - 1])

    def shift_level(self, i: int) -> int:
        """Index of the level whose Rayleigh quotient is the shift used on level i."""
        if self.scheme is Scheme.FixedShift and i > self.i0:
            return self.i0
        return i - 1


def _ancestry(fine: Mesh, coarse: Mesh) -> list[Mesh]:
    """Meshes from ``coarse`` to ``fine`` along the parent links (both included)."""
    chain = [fine]
    while chain[-1] is not coarse:
        if chain[-1].parent is None:
            return []
        chain.append(chain[-1].parent)
    return chain[::-1]


class Hierarchy:
    """Nested levels with their operators and edge prolongations.

    Level i must descend from level i-1 through one or more refinements;
    intermediate meshes only enter through the composed prolongation.
    """

    def __init__(self, levels: Sequence[AssembledOperators]):
        self.levels = list(levels)
        self._prolong: dict[int, SparseMatrix] = {}
        for i in range(1, len(self.levels)):
            if not _ancestry(self.levels[i].mesh, self.levels[i - 1].mesh):
                raise SchemeError(f"meshes not nested between levels {i - 1} and {i}")

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i) -> AssembledOperators:
        return self.levels[i]

    def prolongation(self, i: int) -> SparseMatrix:
        """Edge interpolation from level i-1 to level i."""
        if i not in self._prolong:
            chain = _ancestry(self.levels[i].mesh, self.levels[i - 1].mesh)
            topos = [self.levels[i - 1].topology]
            topos += [build_topology(m) for m in chain[1:-1]]
            topos.append(self.levels[i].topology)
            P = edge_prolongation(topos[0], topos[1])
            for a, b in zip(topos[1:], topos[2:]):
                P = edge_prolongation(a, b) @ P
            self._prolong[i] = P
        return self._prolong[i]

    @property
    def dofs(self) -> list[int]:
        return [ops.n_edge for ops in self.levels]


def build_hierarchy(coarse: Mesh, materials: MaterialMap, refinements: int = 0,
                    refine: Callable[[Mesh], Mesh] = refine_uniform,
                    backend: Optional[str] = None) -> Hierarchy:
    meshes = [coarse]
    for _ in range(refinements):
        meshes.append(refine(meshes[-1]))
    return Hierarchy([assemble_level(m, materials, backend) for m in meshes])


@dataclass
class LevelRecord:
    target: int
    member: int
    level: int
    lam: float
    dof: int
    shift: Optional[float]
    a_norm_residual: float
    divergence: float
    iterations: int = 0
    relative_residual: float = 0.0
    converged: bool = True
    method: str = ""
    wall_time: float = 0.0
    rq_imag: float = 0.0   # |Im a(u, u)| / |a(u, u)|


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)

    def lambdas(self, member: int = 0) -> list[float]:
        return [r.lam for r in self.records if r.member == member]

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(asdict(r)) + "\n")


def rayleigh_quotient(ops: AssembledOperators, u, imag_tol: float = 1e-10) -> float:
    """a(u, u) / (eps u, u) for a nonzero coefficient vector."""
    u = np.asarray(u)
    m = np.vdot(u, ops.M @ u)
    if m.real <= 0:
        raise ValueError("Rayleigh quotient of the zero vector")
    s = np.vdot(u, ops.S @ u)
    if abs(s.imag) > imag_tol * max(abs(s), 1e-300) or abs(m.imag) > imag_tol * abs(m):
        raise ValueError(f"non-Hermitian forms: imag parts {s.imag:.3e}, {m.imag:.3e}")
    return float(s.real / m.real)


@dataclass
class ShiftedSolution:
    u: np.ndarray          # u' / ||u'||_a
    u_hat: np.ndarray      # u' / ||u'||_A
    raw: np.ndarray        # u'
    report: SolveReport


def _level_solve(A: SparseMatrix, b, tol, max_iter, dense_threshold) -> tuple[np.ndarray, SolveReport]:
    try:
        return solve_hermitian(A, b, tol=tol, maxiter=max_iter, dense_threshold=dense_threshold)
    except SingularMatrixError:
        return minres(A, b, tol=tol, maxiter=max_iter, precond=jacobi(A))


def shifted_solve(ops: AssembledOperators, shift: float, rhs, prolongation: Optional[SparseMatrix] = None,
                  tol: float = 1e-10, max_iter: int = 5000,
                  dense_threshold: int = DENSE_THRESHOLD, level: int = 0) -> ShiftedSolution:
    """Solve ``(S - shift M) u' = M P rhs`` and normalise.

    ``rhs`` lives on the previous level when ``prolongation`` is given,
    otherwise on this level. The best iterate is kept when the solver stops
    at the iteration cap. Raises :class:`LevelSolveError` when a(u', u') is
    not positive, i.e. the iterate fell into the gradient kernel.
    """
    u_prev = prolongation @ np.asarray(rhs) if prolongation is not None else np.asarray(rhs)
    A = ops.S - ops.M * shift
    x, report = _level_solve(A, ops.M @ u_prev, tol, max_iter, dense_threshold)
    if not np.all(np.isfinite(x)):
        raise LevelSolveError("solver produced non-finite values", level, report=report)
    a2 = np.vdot(x, ops.S @ x).real
    m2 = np.vdot(x, ops.M @ x).real
    if a2 <= 1e-12 * max(abs(shift), 1.0) * m2:
        raise LevelSolveError("a(u', u') <= 0: iterate collapsed into the gradient kernel", level,
                              report=report)
    big_a = np.sqrt(a2 + ops.shift * m2)
    return ShiftedSolution(x / np.sqrt(a2), x / big_a, x, report)


def _orthonormalize(ops: AssembledOperators, U: np.ndarray, ritz: bool) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt in the M inner product, optionally followed by a
    Rayleigh-Ritz rotation of the block; columns returned with ||u||_a = 1."""
    U = U.copy()
    q = U.shape[1]
    for j in range(q):
        for i in range(j):
            U[:, j] -= np.vdot(U[:, i], ops.M @ U[:, j]) * U[:, i]
        U[:, j] /= ops.m_norm(U[:, j])
    if ritz and q > 1:
        Sm = U.conj().T @ (ops.S @ U)
        Mm = U.conj().T @ (ops.M @ U)
        _, C = sla.eigh(0.5 * (Sm + Sm.conj().T), 0.5 * (Mm + Mm.conj().T))
        U = U @ C
    lams = np.empty(q)
    for j in range(q):
        U[:, j] /= ops.a_norm(U[:, j])
        lams[j] = rayleigh_quotient(ops, U[:, j])
    return U, lams


def _record(ops, cfg, j, level, lam, shift, u, report=None, wall=0.0) -> LevelRecord:
    r = ops.S @ u - lam * (ops.M @ u)
    nrm = np.linalg.norm(u)
    div = float(np.linalg.norm(ops.B @ u) / nrm) if ops.n_vertex else 0.0
    a = np.vdot(u, ops.S @ u)
    rec = LevelRecord(cfg.target, j, level, float(lam), ops.n_edge, shift,
                      float(np.linalg.norm(r) / nrm), div, wall_time=wall,
                      rq_imag=float(abs(a.imag) / max(abs(a), 1e-300)))
    if report is not None:
        rec.iterations = report.iterations
        rec.relative_residual = report.relative_residual
        rec.converged = report.converged
        rec.method = report.method
    return rec


def run_scheme(hierarchy: Hierarchy, cfg: SchemeConfig, coarse: SpectrumResult):
    """Run the configured scheme on ``cfg.levels`` fine levels.

    Returns the final estimates (sorted ascending, one per cluster member)
    and the :class:`IterationTrace` of every member on every level.
    """
    if cfg.levels > len(hierarchy) - 1:
        raise SchemeError(f"{cfg.levels} fine levels requested, hierarchy has {len(hierarchy) - 1}")
    lo, hi = cfg.target - 1, cfg.target - 1 + cfg.cluster_size
    if hi > len(coarse.pairs):
        raise SchemeError(f"coarse spectrum has {len(coarse.pairs)} pairs, target needs {hi}")
    members = list(range(lo, hi))
    if any(i in coarse.zero_modes for i in members):
        raise SchemeError("target cluster is a zero mode; the schemes need a nonzero eigenvalue")
    spanned = {coarse.cluster_of(i) for i in members}
    if len(spanned) > 1 or len(coarse.clusters[spanned.pop()]) != cfg.cluster_size:
        warnings.warn(f"target {cfg.target} (q={cfg.cluster_size}) does not match a coarse cluster "
                      f"{[c for c in coarse.clusters if lo in c]}", stacklevel=2)

    ops0 = hierarchy[0]
    # coarse Ritz vectors are already M-orthogonal and a-normalised
    U = np.column_stack([coarse.pairs[i].vector for i in members])
    lam = np.array([coarse.pairs[i].lam for i in members])
    trace = IterationTrace([_record(ops0, cfg, j, 0, lam[j], None, U[:, j]) for j in range(len(members))])
    history = [lam]

    for i in range(1, cfg.levels + 1):
        ops = hierarchy[i]
        P = hierarchy.prolongation(i)
        shifts = history[cfg.shift_level(i)]
        cols, reports, walls = [], [], []
        for j in range(len(members)):
            t0 = time.perf_counter()
            try:
                sol = shifted_solve(ops, float(shifts[j]), U[:, j], P, tol=cfg.level_tol(i),
                                    max_iter=cfg.max_iter, dense_threshold=cfg.dense_threshold, level=i)
            except LevelSolveError as err:
                err.member = j
                raise
            cols.append(sol.u)
            reports.append(sol.report)
            walls.append(time.perf_counter() - t0)
        U = np.column_stack(cols)
        if cfg.cluster_size > 1:
            U, lam = _orthonormalize(ops, U, cfg.ritz)
        else:
            lam = np.array([rayleigh_quotient(ops, U[:, 0])])
        history.append(lam)
        for j in range(len(members)):
            trace.records.append(_record(ops, cfg, j, i, lam[j], float(shifts[j]), U[:, j],
                                         reports[j], walls[j]))

    ops = hierarchy[cfg.levels]
    order = np.argsort(lam, kind="stable")
    estimates = [EigenPairEstimate(float(lam[j]), U[:, j], None,
                                   EigenPairEstimate.residual_of(ops, float(lam[j]), U[:, j]), cfg.levels)
                 for j in order]
    return estimates, trace

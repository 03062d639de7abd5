"""Coarse mixed eigensolver.

Finds the smallest eigenpairs of the constrained pencil

    S u + B^H p = lam M u,    B u = 0

by subspace iteration with the shift-inverted saddle operator and
Rayleigh-Ritz on (S, M). With a negative shift the (1,1) block is HPD, so
physical zero modes are recovered while the gradient kernel is excluded by
the constraint.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .assembly import AssembledOperators
from .solvers import DenseFactor, SaddleSolver, SolveReport

__all__ = [
    "EigenPairEstimate",
    "SpectrumResult",
    "EigenConvergenceError",
    "solve_coarse_eigen",
    "cluster_spectrum",
    "write_spectrum_json",
    "DEFAULT_SEED",
    "ZERO_THRESHOLD",
]

DEFAULT_SEED = 20240
ZERO_THRESHOLD = 1e-8
CLUSTER_GAP = 1e-2


class EigenConvergenceError(RuntimeError):
    def __init__(self, message: str, partial: Optional["SpectrumResult"] = None):
        super().__init__(message)
        self.partial = partial


@dataclass
class EigenPairEstimate:
    """One eigenpair; ``lam`` is the eigenvalue (``lambda`` in exported data)."""

    lam: float
    vector: np.ndarray
    multiplier: Optional[np.ndarray]
    residual: float
    level: int = 0

    @staticmethod
    def residual_of(ops: AssembledOperators, lam: float, u) -> float:
        mu = ops.M @ u
        return float(np.linalg.norm(ops.S @ u - lam * mu) / np.linalg.norm(mu))


@dataclass
class SpectrumResult:
    pairs: list
    clusters: list
    zero_modes: list
    sigma: float = 0.0
    iterations: int = 0
    converged: bool = True
    solve_reports: list = field(default_factory=list, repr=False)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    def cluster_of(self, index: int) -> int:
        for c, members in enumerate(self.clusters):
            if index in members:
                return c
        raise IndexError(index)

    def to_records(self) -> list:
        return [{"lambda": p.lam, "residual": p.residual, "cluster": self.cluster_of(i),
                 "zero_mode": i in self.zero_modes} for i, p in enumerate(self.pairs)]


def cluster_spectrum(pairs: Sequence, gap_tol: float = CLUSTER_GAP, zero_modes: Sequence = ()) -> list:
    """Greedy partition of sorted eigenvalues into clusters of contiguous indices.

    An eigenvalue joins the current cluster while its relative distance to
    the first member stays below ``gap_tol``; indices in ``zero_modes`` only
    group with each other.
    """
    values = [p.lam if isinstance(p, EigenPairEstimate) else float(p) for p in pairs]
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError("eigenvalues must be sorted ascending")
    zero = set(zero_modes)
    clusters: list[list[int]] = []
    for i, lam in enumerate(values):
        if clusters:
            first = clusters[-1][0]
            if (i in zero) and (first in zero):
                clusters[-1].append(i)
                continue
            if (i not in zero) and (first not in zero):
                ref = max(abs(lam), abs(values[first]))
                if ref == 0 or (lam - values[first]) / ref < gap_tol:
                    clusters[-1].append(i)
                    continue
        clusters.append([i])
    return clusters


def _m_orthonormalize(Y: np.ndarray, Mop, rng: np.random.Generator, tol: float = 1e-10):
    """M-orthonormal basis of span(Y); rank-deficient directions are replaced by random ones."""
    n, p = Y.shape
    for _ in range(3):
        G = Y.conj().T @ Mop(Y)
        G = 0.5 * (G + G.conj().T)
        w, V = np.linalg.eigh(G)
        keep = w > tol * w.max()
        if keep.all():
            return Y @ (V / np.sqrt(w)), False
        # subspace collapse: refill dropped directions
        good = Y @ (V[:, keep] / np.sqrt(w[keep]))
        fresh = rng.standard_normal((n, p - keep.sum())) + 1j * rng.standard_normal((n, p - keep.sum()))
        fresh -= good @ (good.conj().T @ Mop(fresh))
        Y = np.hstack([good, fresh])
    raise EigenConvergenceError("could not build an M-orthonormal block")


def _multiplier(ops: AssembledOperators, lam: float, u: np.ndarray, BBH: Optional[DenseFactor]) -> np.ndarray:
    """Least-squares p with B^H p = lam M u - S u."""
    if ops.n_vertex == 0:
        return np.zeros(0, dtype=complex)
    r = lam * (ops.M @ u) - ops.S @ u
    return BBH.solve(ops.B @ r)


def solve_coarse_eigen(ops: AssembledOperators, k: int, sigma: Optional[float] = None,
                       tol: float = 1e-10, seed: int = DEFAULT_SEED, max_outer: int = 500,
                       subspace: Optional[int] = None, gap_tol: float = CLUSTER_GAP) -> SpectrumResult:
    """k smallest eigenpairs of the mixed problem on one level.

    ``sigma`` defaults to ``-gamma/beta`` of the materials. The iterated
    subspace has dimension ``subspace`` (default ``k + max(4, k)``, at least
    k + 4). Converged pairs have residual ``||S u - lam M u|| / ||M u|| <= tol``
    relative to ``max(1, |lam|)`` and ``||B u|| <= tol ||u||``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if sigma is None:
        sigma = -ops.shift
    if not sigma < 0:
        raise ValueError(f"shift must be negative, got {sigma}")
    n = ops.n_edge
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} free edge DOFs")
    p = min(n, subspace if subspace is not None else k + max(4, k))
    if p < min(n, k + 4):
        raise ValueError("subspace dimension must be at least k + 4")

    rng = np.random.default_rng(seed)
    A = ops.S - ops.M * sigma
    L = ops.G.H @ (ops.M @ ops.G) if ops.n_vertex else None
    precond = None
    if L is not None:
        # exact Schur complement of the shifted block: B A^-1 B^H = G^H M G / |sigma|
        Lf = DenseFactor(L)
        precond = lambda r: abs(sigma) * Lf.solve(r)  # noqa: E731
    solver = SaddleSolver(A, ops.B, tol=min(1e-12, tol), schur_precond=precond)
    Mop = ops.M.__matmul__

    X = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    X, _ = _m_orthonormalize(X, Mop, rng)
    reports: list[SolveReport] = []
    theta = np.zeros(p)
    res = np.full(p, np.inf)
    it = 0
    converged = False
    for it in range(1, max_outer + 1):
        Y, _, rep = solver.solve(Mop(X))
        reports.append(rep)
        Y, _ = _m_orthonormalize(Y, Mop, rng)
        Sm = Y.conj().T @ (ops.S @ Y)
        Sm = 0.5 * (Sm + Sm.conj().T)
        theta, C = np.linalg.eigh(Sm)
        X = Y @ C
        R = ops.S @ X[:, :k] - (ops.M @ X[:, :k]) * theta[:k]
        MX = np.linalg.norm(ops.M @ X[:, :k], axis=0)
        res = np.linalg.norm(R, axis=0) / MX / np.maximum(1.0, np.abs(theta[:k]))
        div = np.linalg.norm(ops.B @ X[:, :k], axis=0) / np.linalg.norm(X[:, :k], axis=0)
        if np.all(res <= tol) and np.all(div <= tol):
            converged = True
            break

    lams = theta[:k]
    nonzero = np.abs(lams) > ZERO_THRESHOLD * np.abs(lams).max()
    first = np.abs(lams[nonzero]).min() if nonzero.any() else 1.0
    zero = np.abs(lams) <= ZERO_THRESHOLD * first
    BBH = DenseFactor((ops.B @ ops.B.H).toarray()) if ops.n_vertex else None
    pairs = []
    for j in range(k):
        u = X[:, j]
        if zero[j]:
            u = u / ops.m_norm(u)
        else:
            u = u / ops.a_norm(u)
        lam = float(lams[j])
        pairs.append(EigenPairEstimate(lam, u, _multiplier(ops, lam, u, BBH),
                                       EigenPairEstimate.residual_of(ops, lam, u), level=0))
    zero_modes = [j for j in range(k) if zero[j]]
    result = SpectrumResult(pairs, cluster_spectrum(pairs, gap_tol, zero_modes), zero_modes,
                            float(sigma), it, converged, reports)
    if not converged:
        raise EigenConvergenceError(
            f"subspace iteration not converged after {max_outer} steps "
            f"(max residual {res.max():.2e})", result)
    return result


def write_spectrum_json(result: SpectrumResult, path) -> None:
    Path(path).write_text(json.dumps({"sigma": result.sigma, "iterations": result.iterations,
                                      "converged": result.converged, "pairs": result.to_records()},
                                     indent=2) + "\n")

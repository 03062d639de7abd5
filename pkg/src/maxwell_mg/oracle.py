"""Reference eigensolvers used to check the schemes.

They share only the assembled matrices with the production path:
:func:`inverse_iteration` factors ``S - shift M`` with SuperLU and iterates
a block in the discretely divergence-free subspace; :func:`dense_saddle_eigenvalues`
runs QZ on the full saddle pencil of a small mesh.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .assembly import AssembledOperators

# Hermitian pencils: symmetric ordering with weak diagonal pivoting keeps the MMD fill
_SPLU = dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01, options=dict(SymmetricMode=True))

__all__ = ["OracleResult", "inverse_iteration", "dense_saddle_eigenvalues", "dense_eigenpairs"]


@dataclass
class OracleResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool


def _divergence_free_projector(ops: AssembledOperators):
    """u -> u - G (G^H M G)^-1 G^H M u, the M-orthogonal projection off the gradients."""
    if ops.n_vertex == 0:
        return lambda U: U
    G = ops.G.to_scipy()
    M = ops.M.to_scipy()
    lu = spla.splu((G.conj().T @ M @ G).tocsc(), **_SPLU)

    def project(U):
        return U - G @ lu.solve(np.asarray(G.conj().T @ (M @ U)))
    return project


def inverse_iteration(ops: AssembledOperators, shift: float, count: int, tol: float = 1e-10,
                      extra: int = 3, seed: int = 7, max_iter: int = 500) -> OracleResult:
    """The ``count`` eigenpairs of (S, M) nearest ``shift`` with B u = 0.

    Block inverse iteration of width ``count + extra`` with a sparse LU of
    ``S - shift M`` and Rayleigh-Ritz each step; converged when every wanted
    pair has ``||S u - lam M u|| / (|lam| ||M u||) <= tol``.
    """
    S, M = ops.S.to_scipy(), ops.M.to_scipy()
    n = S.shape[0]
    p = min(n, count + extra)
    lu = spla.splu((S - shift * M).tocsc(), **_SPLU)
    project = _divergence_free_projector(ops)
    rng = np.random.default_rng(seed)
    X = project(rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p)))
    theta = np.zeros(count)
    res = np.full(count, np.inf)
    it = 0
    for it in range(1, max_iter + 1):
        Y = project(lu.solve(np.asarray(M @ X)))
        Q, _ = np.linalg.qr(Y)
        Sm = Q.conj().T @ (S @ Q)
        Mm = Q.conj().T @ (M @ Q)
        w, C = sla.eigh(0.5 * (Sm + Sm.conj().T), 0.5 * (Mm + Mm.conj().T))
        order = np.argsort(np.abs(w - shift))
        w, C = w[order], C[:, order]
        X = Q @ C
        theta = w[:count]
        U = X[:, :count]
        MU = M @ U
        res = np.linalg.norm(S @ U - MU * theta, axis=0) / (np.abs(theta) * np.linalg.norm(MU, axis=0))
        if np.all(res <= tol):
            break
    order = np.argsort(theta)
    return OracleResult(theta[order], X[:, :count][:, order], res[order], it, bool(np.all(res <= tol)))


def dense_eigenpairs(ops: AssembledOperators, zero_tol: float = 1e-8):
    """Nonzero eigenpairs of (S, M) by a dense Hermitian solve (small meshes only).

    The gradient kernel is removed, so the result is the mixed spectrum
    without its physical zero modes.
    """
    w, V = sla.eigh(ops.S.toarray(), ops.M.toarray())
    keep = np.abs(w) > zero_tol * np.abs(w).max()
    return w[keep], V[:, keep]


def dense_saddle_eigenvalues(ops: AssembledOperators) -> np.ndarray:
    """Finite eigenvalues of ``[[S, B^H], [B, 0]] x = lam [[M, 0], [0, 0]] x`` by QZ."""
    ne, nv = ops.n_edge, ops.n_vertex
    Bd = ops.B.toarray()
    K = np.block([[ops.S.toarray(), Bd.conj().T], [Bd, np.zeros((nv, nv))]])
    Mb = np.zeros_like(K)
    Mb[:ne, :ne] = ops.M.toarray()
    alpha, beta = sla.eigvals(K, Mb, homogeneous_eigvals=True)
    finite = np.abs(beta) > 1e-8 * np.abs(alpha)
    return np.sort((alpha[finite] / beta[finite]).real)

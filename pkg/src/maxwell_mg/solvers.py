"""Linear solvers for the shifted and saddle-point systems.

* :func:`minres` - preconditioned MINRES for Hermitian, possibly indefinite A.
* :func:`cg` - preconditioned CG for HPD A, vectorised over right-hand-side columns.
* :func:`dense_factor_solve` / :class:`DenseFactor` - LU with partial pivoting.
* :func:`saddle_solve` / :class:`SaddleSolver` - Schur complement solve of
  ``[[A, B^H], [B, 0]] [u; p] = [f; g]`` with A HPD.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .sparse import SparseMatrix

__all__ = [
    "SolveReport",
    "SingularMatrixError",
    "minres",
    "cg",
    "DenseFactor",
    "dense_factor_solve",
    "jacobi",
    "solve_hermitian",
    "SaddleSolver",
    "saddle_solve",
    "DENSE_THRESHOLD",
]

DENSE_THRESHOLD = 3000

Operator = Callable[[np.ndarray], np.ndarray]


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool
    method: str
    tol: float = 0.0
    history: list = field(default_factory=list, repr=False)
    message: str = ""

    def merge(self, other: "SolveReport") -> "SolveReport":
        return SolveReport(self.iterations + other.iterations,
                           max(self.relative_residual, other.relative_residual),
                           self.converged and other.converged,
                           f"{self.method}+{other.method}", max(self.tol, other.tol))


def _as_operator(a) -> Operator:
    if callable(a):
        return a
    if isinstance(a, SparseMatrix):
        return a.__matmul__
    a = np.asarray(a)
    return lambda x: a @ x


def jacobi(a: SparseMatrix) -> Operator:
    """Diagonal preconditioner ``x -> x / |diag(A)|`` (HPD even for indefinite A)."""
    d = np.abs(a.diagonal())
    d[d == 0] = 1.0
    inv = 1.0 / d
    return lambda x: (inv * x.T).T


def minres(a, b, x0=None, tol: float = 1e-10, maxiter: Optional[int] = None,
           precond: Optional[Operator] = None, true_residual_check: bool = True):
    """Preconditioned MINRES for Hermitian ``a``.

    ``precond`` applies an HPD approximation of A^-1. Stops when
    ``||b - A x|| <= tol ||b||``; otherwise returns the last iterate, whose
    preconditioned residual is the smallest seen, with ``converged=False``.
    Stops early when the estimated condition number of the Lanczos
    tridiagonal reaches 0.1/eps (singular system).
    """
    A = _as_operator(a)
    Minv = precond if precond is not None else (lambda v: v)
    b = np.asarray(b, dtype=np.complex128)
    n = b.shape[0]
    maxiter = 5 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    x = np.zeros(n, dtype=np.complex128) if x0 is None else np.array(x0, dtype=np.complex128)
    if bnorm == 0:
        return np.zeros(n, dtype=np.complex128), SolveReport(0, 0.0, True, "minres", tol)

    r1 = b - A(x) if x0 is not None else b.copy()
    y = Minv(r1)
    beta1 = np.vdot(r1, y).real
    if beta1 < 0:
        return x, SolveReport(0, np.linalg.norm(r1) / bnorm, False, "minres", tol,
                              message="preconditioner is not positive definite")
    beta1 = np.sqrt(beta1)
    if beta1 == 0:
        return x, SolveReport(0, 0.0, True, "minres", tol)
    r1_norm0 = np.linalg.norm(r1)
    # preconditioned-norm target scaled to the 2-norm target
    target = tol * bnorm / r1_norm0 * beta1

    oldb, beta, dbar, epsln, phibar = 0.0, beta1, 0.0, 0.0, beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n, dtype=np.complex128)
    w2 = np.zeros(n, dtype=np.complex128)
    r2 = r1.copy()
    history = [np.linalg.norm(r1) / bnorm]
    message = ""
    itn = 0
    converged = False
    eps = np.finfo(float).eps
    gmax, gmin = 0.0, np.inf
    while itn < maxiter:
        itn += 1
        v = y / beta
        y = A(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = np.vdot(v, y).real
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = Minv(r2)
        oldb = beta
        beta2 = np.vdot(r2, y).real
        if beta2 < 0:
            message = "preconditioner is not positive definite"
            break
        beta = np.sqrt(beta2)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), eps)
        gmax, gmin = max(gmax, gamma), min(gmin, gamma)
        if gmax / gmin >= 0.1 / eps:
            # the next update would divide by a numerically zero pivot
            message = "system is singular to working precision"
            break
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        history.append(phibar / beta1 * r1_norm0 / bnorm)

        if phibar <= target or beta == 0:
            if not true_residual_check:
                converged = True
                break
            rel = np.linalg.norm(b - A(x)) / bnorm
            if rel <= tol:
                converged = True
                break
            if beta == 0:
                message = "Krylov space exhausted"
                break
            # estimate too optimistic: tighten and keep iterating
            target *= max(0.1, tol / rel)
    rel = np.linalg.norm(b - A(x)) / bnorm
    return x, SolveReport(itn, float(rel), bool(rel <= tol), "minres", tol, history, message)


def cg(a, b, x0=None, tol: float = 1e-10, maxiter: Optional[int] = None,
       precond: Optional[Operator] = None):
    """Preconditioned conjugate gradients for HPD ``a``.

    ``b`` may be (n,) or (n, m); columns are iterated independently in
    lockstep, so ``a`` and ``precond`` must accept 2D blocks.
    """
    A = _as_operator(a)
    Minv = precond if precond is not None else (lambda v: v)
    b = np.asarray(b, dtype=np.complex128)
    vec = b.ndim == 1
    B = b[:, None] if vec else b
    n, m = B.shape
    maxiter = 10 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(B, axis=0)
    bnorm_safe = np.where(bnorm == 0, 1.0, bnorm)
    X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=np.complex128).reshape(n, m)
    R = B - A(X) if x0 is not None else B.copy()
    Z = Minv(R)
    P = Z.copy()
    rz = np.einsum("ij,ij->j", R.conj(), Z).real
    rel = np.linalg.norm(R, axis=0) / bnorm_safe
    history = [float(rel.max())]
    itn = 0
    active = rel > tol
    while active.any() and itn < maxiter:
        itn += 1
        AP = A(P)
        pap = np.einsum("ij,ij->j", P.conj(), AP).real
        if np.any(pap[active] <= 0):
            break
        alpha = np.where(active, rz / np.where(pap == 0, 1, pap), 0.0)
        X += alpha * P
        R -= alpha * AP
        rel = np.linalg.norm(R, axis=0) / bnorm_safe
        history.append(float(rel.max()))
        active = rel > tol
        if not active.any():
            break
        Z = Minv(R)
        rz_new = np.einsum("ij,ij->j", R.conj(), Z).real
        beta = np.where(active, rz_new / np.where(rz == 0, 1, rz), 0.0)
        P = Z + beta * P
        rz = rz_new
    true_rel = np.linalg.norm(B - A(X), axis=0) / bnorm_safe
    worst = float(true_rel.max())
    rep = SolveReport(itn, worst, worst <= tol, "cg", tol, history)
    return (X[:, 0] if vec else X), rep


class DenseFactor:
    """LU factorisation with partial pivoting of a dense square matrix."""

    def __init__(self, a):
        a = a.toarray() if isinstance(a, SparseMatrix) else np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        self.shape = a.shape
        self.norm = float(np.abs(a).sum(axis=1).max()) if a.size else 0.0
        with warnings.catch_warnings():
            # singularity is reported through SingularMatrixError below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            self.lu, self.piv = sla.lu_factor(a, check_finite=True)
        pivots = np.abs(np.diag(self.lu))
        if a.size == 0 or pivots.min() <= np.finfo(float).eps * max(self.norm, 1e-300):
            raise SingularMatrixError("matrix is singular to working precision")

    def solve(self, b, conjugate_transpose: bool = False) -> np.ndarray:
        return sla.lu_solve((self.lu, self.piv), b, trans=2 if conjugate_transpose else 0)

    __call__ = solve


def dense_factor_solve(a, b) -> np.ndarray:
    return DenseFactor(a).solve(np.asarray(b))


def solve_hermitian(a: SparseMatrix, b, tol: float = 1e-10, maxiter: int = 5000,
                    precond: Optional[Operator] = None, x0=None,
                    dense_threshold: int = DENSE_THRESHOLD):
    """Dense LU below ``dense_threshold`` unknowns, Jacobi-preconditioned MINRES above."""
    b = np.asarray(b, dtype=np.complex128)
    if a.shape[0] <= dense_threshold:
        x = dense_factor_solve(a, b)
        bn = np.linalg.norm(b)
        rel = float(np.linalg.norm(b - a @ x) / bn) if bn else 0.0
        return x, SolveReport(1, rel, rel <= tol, "dense-lu", tol)
    return minres(a, b, x0=x0, tol=tol, maxiter=maxiter,
                  precond=precond if precond is not None else jacobi(a))


class SaddleSolver:
    """Repeated solves of ``[[A, B^H], [B, 0]] [u; p] = [f; g]`` with A HPD.

    The multiplier solves CG on the Schur complement ``B A^-1 B^H``; inner
    A-solves use a dense LU below ``dense_threshold`` unknowns and Jacobi-CG
    above. ``schur_precond`` optionally applies an approximate inverse of the
    Schur complement.
    """

    def __init__(self, A: SparseMatrix, B: SparseMatrix, tol: float = 1e-12,
                 schur_precond: Optional[Operator] = None,
                 dense_threshold: int = DENSE_THRESHOLD, maxiter: int = 1000):
        self.A, self.B = A, B
        self.BH = B.H
        self.tol = tol
        self.maxiter = maxiter
        self.schur_precond = schur_precond
        self.inner_reports: list[SolveReport] = []
        if A.shape[0] <= dense_threshold:
            self._factor = DenseFactor(A)
            self._Bd = B.toarray()
            self._BHd = self._Bd.conj().T
        else:
            self._factor = None
            self._jac = jacobi(A)

    def _ainv(self, f: np.ndarray) -> np.ndarray:
        if self._factor is not None:
            return self._factor.solve(f)
        x, rep = cg(self.A, f, tol=self.tol * 1e-2, precond=self._jac, maxiter=20 * self.A.shape[0])
        self.inner_reports.append(rep)
        return x

    def _b(self, u):
        return self._Bd @ u if self._factor is not None else self.B @ u

    def _bh(self, p):
        return self._BHd @ p if self._factor is not None else self.BH @ p

    def solve(self, f, g=None):
        f = np.asarray(f, dtype=np.complex128)
        block = f.ndim == 2
        F = f if block else f[:, None]
        m = F.shape[1]
        nv = self.B.shape[0]
        Gr = np.zeros((nv, m), dtype=np.complex128) if g is None else \
            np.asarray(g, dtype=np.complex128).reshape(nv, m)
        u0 = self._ainv(F)
        if nv:
            rhs = self._b(u0) - Gr
            schur = lambda P: self._b(self._ainv(self._bh(P)))  # noqa: E731
            P, rep = cg(schur, rhs, tol=self.tol, maxiter=self.maxiter, precond=self.schur_precond)
            U = u0 - self._ainv(self._bh(P))
        else:
            P = np.zeros((0, m), dtype=np.complex128)
            U = u0
            rep = SolveReport(0, 0.0, True, "cg", self.tol)
        rel = self.residual(F, Gr, U, P)
        report = SolveReport(rep.iterations, float(rel.max()), bool(rel.max() <= self.tol),
                             "schur-cg", self.tol)
        if not block:
            return U[:, 0], P[:, 0], report
        return U, P, report

    def residual(self, F, Gr, U, P) -> np.ndarray:
        """Column-wise combined relative residual of both block equations."""
        r1 = F - self.A @ U - self._bh(P)
        r2 = Gr - self._b(U)
        num = np.sqrt(np.linalg.norm(r1, axis=0) ** 2 + np.linalg.norm(r2, axis=0) ** 2)
        den = np.sqrt(np.linalg.norm(F, axis=0) ** 2 + np.linalg.norm(Gr, axis=0) ** 2)
        return num / np.where(den == 0, 1, den)


def saddle_solve(S_shifted: SparseMatrix, B_block: SparseMatrix, f, g=None, tol: float = 1e-12,
                 schur_precond: Optional[Operator] = None, dense_threshold: int = DENSE_THRESHOLD):
    """One-shot saddle-point solve; returns (u, p, SolveReport)."""
    return SaddleSolver(S_shifted, B_block, tol, schur_precond, dense_threshold).solve(f, g)

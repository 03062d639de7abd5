"""Complex CSR matrices.

Construction and format conversion go through ``scipy.sparse``; products use
the kernels in :mod:`maxwell_mg.kernels`.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels

__all__ = ["SparseMatrix", "matvec", "write_triplets", "read_triplets"]


class SparseMatrix:
    """Compressed sparse row matrix with complex values.

    Column indices are strictly increasing within each row and entries with
    ``|a_ij| <= drop_tol * max|a|`` are removed on construction.
    """

    __slots__ = ("indptr", "indices", "data", "shape", "_scipy")

    def __init__(self, indptr, indices, data, shape):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.complex128)
        self.shape = (int(shape[0]), int(shape[1]))
        self._scipy = None
        if len(self.indptr) != self.shape[0] + 1 or self.indptr[-1] != len(self.indices):
            raise ValueError("inconsistent CSR arrays")
        for arr in (self.indptr, self.indices, self.data):
            arr.setflags(write=False)

    @classmethod
    def from_scipy(cls, a, drop_tol: float = 0.0) -> "SparseMatrix":
        a = sp.csr_matrix(a, dtype=np.complex128)
        a.sum_duplicates()
        a.sort_indices()
        if a.nnz:
            cutoff = drop_tol * np.abs(a.data).max()
            a.data[np.abs(a.data) <= cutoff] = 0
            a.eliminate_zeros()
        return cls(a.indptr, a.indices, a.data, a.shape)

    @classmethod
    def from_triplets(cls, rows, cols, vals, shape, drop_tol: float = 0.0) -> "SparseMatrix":
        return cls.from_scipy(sp.coo_matrix((vals, (rows, cols)), shape=shape), drop_tol)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), (n, n))

    @classmethod
    def diag(cls, values) -> "SparseMatrix":
        values = np.asarray(values, dtype=complex)
        n = len(values)
        return cls(np.arange(n + 1), np.arange(n), values, (n, n))

    @property
    def nnz(self) -> int:
        return len(self.data)

    def to_scipy(self) -> sp.csr_matrix:
        if self._scipy is None:
            self._scipy = sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)
        return self._scipy

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def matvec(self, x, conjugate_transpose: bool = False) -> np.ndarray:
        return matvec(self, x, conjugate_transpose)

    def __matmul__(self, x):
        if isinstance(x, SparseMatrix):
            return SparseMatrix.from_scipy(self.to_scipy() @ x.to_scipy())
        x = np.asarray(x)
        if x.ndim == 2:
            if x.shape[0] != self.shape[1]:
                raise ValueError(f"dimension mismatch: matrix {self.shape}, block {x.shape}")
            return np.asarray(self.to_scipy() @ x, dtype=np.complex128)
        return self.matvec(x)

    @property
    def H(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().conj().T)

    @property
    def T(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().T)

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy() + other.to_scipy())

    def __sub__(self, other: "SparseMatrix") -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy() - other.to_scipy())

    def scale(self, alpha) -> "SparseMatrix":
        return SparseMatrix(self.indptr, self.indices, self.data * alpha, self.shape)

    def __mul__(self, alpha):
        return self.scale(alpha)

    __rmul__ = __mul__

    def hermitian_defect(self) -> float:
        """max|A - A^H| / max|A|."""
        a = self.to_scipy()
        if a.nnz == 0:
            return 0.0
        d = a - a.conj().T
        return float(abs(d).max() / abs(a).max()) if d.nnz else 0.0

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def matvec(a: SparseMatrix, x, conjugate_transpose: bool = False) -> np.ndarray:
    """``A x`` or ``A^H x``."""
    x = np.asarray(x)
    n_in = a.shape[0] if conjugate_transpose else a.shape[1]
    if x.shape != (n_in,):
        raise ValueError(f"dimension mismatch: matrix {a.shape}, vector {x.shape}")
    if conjugate_transpose:
        return kernels.csr_rmatvec(a.indptr, a.indices, a.data, x.astype(np.complex128), a.shape[1])
    return kernels.csr_matvec(a.indptr, a.indices, a.data, x.astype(np.complex128))


def write_triplets(a: SparseMatrix, path) -> None:
    """Coordinate text dump: header ``nrows ncols nnz`` then ``i j re im`` lines."""
    coo = a.to_scipy().tocoo()
    lines = [f"{a.shape[0]} {a.shape[1]} {coo.nnz}"]
    lines += [f"{i} {j} {float(v.real)!r} {float(v.imag)!r}" for i, j, v in zip(coo.row, coo.col, coo.data)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_triplets(path) -> SparseMatrix:
    lines = Path(path).read_text().splitlines()
    try:
        nr, nc, nnz = (int(t) for t in lines[0].split())
    except (IndexError, ValueError):
        raise ValueError("triplet file header must be 'nrows ncols nnz'") from None
    if len(lines) - 1 < nnz:
        raise ValueError(f"triplet file truncated: {len(lines) - 1} of {nnz} entries")
    body = np.array([ln.split() for ln in lines[1:nnz + 1]], dtype=float).reshape(nnz, 4)
    return SparseMatrix.from_triplets(body[:, 0].astype(int), body[:, 1].astype(int),
                                      body[:, 2] + 1j * body[:, 3], (nr, nc))

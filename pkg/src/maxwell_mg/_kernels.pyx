# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: CSR complex matvec and Whitney element matrices.

Same signatures as ``_kernels_py``. The mass matrix uses the closed form
of the integrals of products of barycentric coordinates instead of a
quadrature loop; both are exact for these integrands.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

ctypedef double complex cplx


def csr_matvec(const long[::1] indptr, const long[::1] indices,
               const cplx[::1] data, x):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cplx[::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    out = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] y = out
    cdef Py_ssize_t i, k
    cdef cplx acc
    with nogil:
        for i in range(n):
            acc = 0
            for k in range(indptr[i], indptr[i + 1]):
                acc = acc + data[k] * xv[indices[k]]
            y[i] = acc
    return out


def csr_rmatvec(const long[::1] indptr, const long[::1] indices,
                const cplx[::1] data, x, Py_ssize_t ncols):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cplx[::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    out = np.zeros(ncols, dtype=np.complex128)
    cdef cplx[::1] y = out
    cdef Py_ssize_t i, k
    cdef cplx xi, dk
    with nogil:
        for i in range(n):
            xi = xv[i]
            for k in range(indptr[i], indptr[i + 1]):
                dk = data[k]
                y[indices[k]] = y[indices[k]] + dk.conjugate() * xi
    return out


cdef double _grads(const double[:, ::1] v, const long[:, ::1] cells, Py_ssize_t c,
                   int d, double[:, ::1] g) noexcept nogil:
    """Barycentric gradients of cell c into g[0..d, 0..d-1]; returns the volume."""
    cdef double a00, a01, a02, a10, a11, a12, a20, a21, a22, det
    cdef Py_ssize_t i0 = cells[c, 0]
    cdef int k
    if d == 3:
        # A has columns x_k - x_0; grad lambda_k is row k-1 of A^-1
        a00 = v[cells[c, 1], 0] - v[i0, 0]; a01 = v[cells[c, 2], 0] - v[i0, 0]; a02 = v[cells[c, 3], 0] - v[i0, 0]
        a10 = v[cells[c, 1], 1] - v[i0, 1]; a11 = v[cells[c, 2], 1] - v[i0, 1]; a12 = v[cells[c, 3], 1] - v[i0, 1]
        a20 = v[cells[c, 1], 2] - v[i0, 2]; a21 = v[cells[c, 2], 2] - v[i0, 2]; a22 = v[cells[c, 3], 2] - v[i0, 2]
        det = a00 * (a11 * a22 - a12 * a21) - a01 * (a10 * a22 - a12 * a20) + a02 * (a10 * a21 - a11 * a20)
        g[1, 0] = (a11 * a22 - a12 * a21) / det
        g[1, 1] = (a02 * a21 - a01 * a22) / det
        g[1, 2] = (a01 * a12 - a02 * a11) / det
        g[2, 0] = (a12 * a20 - a10 * a22) / det
        g[2, 1] = (a00 * a22 - a02 * a20) / det
        g[2, 2] = (a02 * a10 - a00 * a12) / det
        g[3, 0] = (a10 * a21 - a11 * a20) / det
        g[3, 1] = (a01 * a20 - a00 * a21) / det
        g[3, 2] = (a00 * a11 - a01 * a10) / det
        for k in range(3):
            g[0, k] = -(g[1, k] + g[2, k] + g[3, k])
        return fabs(det) / 6.0
    a00 = v[cells[c, 1], 0] - v[i0, 0]; a01 = v[cells[c, 2], 0] - v[i0, 0]
    a10 = v[cells[c, 1], 1] - v[i0, 1]; a11 = v[cells[c, 2], 1] - v[i0, 1]
    det = a00 * a11 - a01 * a10
    g[1, 0] = a11 / det
    g[1, 1] = -a01 / det
    g[2, 0] = -a10 / det
    g[2, 1] = a00 / det
    for k in range(2):
        g[0, k] = -(g[1, k] + g[2, k])
    return fabs(det) / 2.0


def whitney_local(const double[:, ::1] vertices, const long[:, ::1] cells,
                  const long[::1] region_id, const cplx[:, :, ::1] mu_inv,
                  const cplx[:, :, ::1] eps, local_edges):
    cdef int d = vertices.shape[1]
    cdef Py_ssize_t nc = cells.shape[0]
    cdef long[:, ::1] le = np.ascontiguousarray(local_edges, dtype=np.int64)
    cdef int ne = le.shape[0]
    cdef int nk = 3 if d == 3 else 1
    S_out = np.empty((nc, ne, ne), dtype=np.complex128)
    M_out = np.empty((nc, ne, ne), dtype=np.complex128)
    vol_out = np.empty(nc, dtype=np.float64)
    cdef cplx[:, :, ::1] S = S_out
    cdef cplx[:, :, ::1] M = M_out
    cdef double[::1] vol = vol_out
    cdef double[:, ::1] g = np.empty((4, 3))
    cdef double[:, ::1] curl = np.empty((6, 3))
    cdef cplx[:, ::1] ge = np.empty((4, 4), dtype=np.complex128)
    cdef cplx[:, ::1] epsg = np.empty((4, 3), dtype=np.complex128)
    cdef double denom = (d + 1.0) * (d + 2.0)
    cdef Py_ssize_t c
    cdef int i, j, k, l, a, b, p, q, r
    cdef double w, Iap, Iaq, Ibp, Ibq
    cdef cplx acc
    with nogil:
        for c in range(nc):
            w = _grads(vertices, cells, c, d, g)
            vol[c] = w
            r = region_id[c]
            for i in range(ne):
                a = le[i, 0]
                b = le[i, 1]
                if d == 3:
                    curl[i, 0] = 2.0 * (g[a, 1] * g[b, 2] - g[a, 2] * g[b, 1])
                    curl[i, 1] = 2.0 * (g[a, 2] * g[b, 0] - g[a, 0] * g[b, 2])
                    curl[i, 2] = 2.0 * (g[a, 0] * g[b, 1] - g[a, 1] * g[b, 0])
                else:
                    curl[i, 0] = 2.0 * (g[a, 0] * g[b, 1] - g[a, 1] * g[b, 0])
            for i in range(ne):
                for j in range(ne):
                    acc = 0
                    for k in range(nk):
                        for l in range(nk):
                            acc = acc + curl[i, k] * mu_inv[r, k, l] * curl[j, l]
                    S[c, i, j] = acc * w
            # ge[x, y] = grad(lambda_x)^T eps grad(lambda_y)
            for a in range(d + 1):
                for k in range(d):
                    acc = 0
                    for l in range(d):
                        acc = acc + eps[r, k, l] * g[a, l]
                    epsg[a, k] = acc
            for a in range(d + 1):
                for b in range(d + 1):
                    acc = 0
                    for k in range(d):
                        acc = acc + g[a, k] * epsg[b, k]
                    ge[a, b] = acc
            for i in range(ne):
                a = le[i, 0]
                b = le[i, 1]
                for j in range(ne):
                    p = le[j, 0]
                    q = le[j, 1]
                    Iap = (2.0 if a == p else 1.0) / denom
                    Iaq = (2.0 if a == q else 1.0) / denom
                    Ibp = (2.0 if b == p else 1.0) / denom
                    Ibq = (2.0 if b == q else 1.0) / denom
                    M[c, i, j] = w * (Iap * ge[b, q] - Iaq * ge[b, p] - Ibp * ge[a, q] + Ibq * ge[a, p])
    return S_out, M_out, vol_out

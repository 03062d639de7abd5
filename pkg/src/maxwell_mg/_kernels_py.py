"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and results match the Cython module; ``kernels`` picks one at import.
"""
import numpy as np

from .quadrature import simplex_rule


def csr_matvec(indptr, indices, data, x):
    n = len(indptr) - 1
    prod = data * x[indices]
    y = np.zeros(n, dtype=np.result_type(data, x))
    nonempty = indptr[:-1] < indptr[1:]
    if prod.size:
        y[nonempty] = np.add.reduceat(prod, indptr[:-1][nonempty])
    return y


def csr_rmatvec(indptr, indices, data, x, ncols):
    """y = A^H x."""
    rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    y = np.zeros(ncols, dtype=np.result_type(data, x))
    np.add.at(y, indices, np.conj(data) * x[rows])
    return y


def barycentric_gradients(vertices, cells):
    """Gradients (nc, d+1, d) of the barycentric coordinates and cell volumes."""
    x = vertices[cells]
    d = vertices.shape[1]
    a = np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))  # columns x_k - x_0
    inv = np.linalg.inv(a)
    grads = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)
    vol = np.abs(np.linalg.det(a)) / (2.0 if d == 2 else 6.0)
    return grads, vol


def whitney_local(vertices, cells, region_id, mu_inv, eps, local_edges):
    """Local curl-curl and mass matrices of the Whitney basis, local orientation.

    ``mu_inv`` is (nr, k, k) with k = 1 in 2D, 3 in 3D; ``eps`` is (nr, d, d).
    Returns S_loc, M_loc of shape (nc, ne, ne) and cell volumes.
    """
    d = vertices.shape[1]
    grads, vol = barycentric_gradients(vertices, cells)
    ga = grads[:, local_edges[:, 0]]
    gb = grads[:, local_edges[:, 1]]
    if d == 3:
        curl = 2.0 * np.cross(ga, gb)
    else:
        curl = 2.0 * (ga[..., 0] * gb[..., 1] - ga[..., 1] * gb[..., 0])[..., None]
    mi = mu_inv[region_id]
    S = np.einsum("cik,ckl,cjl->cij", curl, mi, curl) * vol[:, None, None]

    lam, w = simplex_rule(d, 2)
    la = lam[:, local_edges[:, 0]]  # (nq, ne)
    lb = lam[:, local_edges[:, 1]]
    # W(q) = la gb - lb ga, shape (nc, nq, ne, d)
    W = la[None, :, :, None] * gb[:, None] - lb[None, :, :, None] * ga[:, None]
    ep = eps[region_id]
    M = np.einsum("q,cqik,ckl,cqjl->cij", w, W, ep, W, optimize=True) * vol[:, None, None]
    return S, M, vol

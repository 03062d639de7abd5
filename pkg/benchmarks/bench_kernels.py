"""Compiled vs numpy kernels: sparse matvec, adjoint matvec and local Whitney matrices.

Usage: python3 benchmarks/bench_kernels.py [--resolution N] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from maxwell_mg import kernels
from maxwell_mg.assembly import assemble_level
from maxwell_mg.materials import vacuum
from maxwell_mg.mesh import LOCAL_EDGES, generate_mesh


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=12)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    try:
        fast = kernels.backend("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1
    slow = kernels.backend("python")

    mesh = generate_mesh("UnitCube", args.resolution)
    ops = assemble_level(mesh, vacuum())
    a = ops.S.to_scipy().tocsr()
    a.sort_indices()
    indptr, indices = a.indptr.astype(np.int64), a.indices.astype(np.int64)
    data = a.data.astype(np.complex128)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(a.shape[1]) + 1j * rng.standard_normal(a.shape[1])

    v = np.ascontiguousarray(mesh.vertices, dtype=np.float64)
    c = np.ascontiguousarray(mesh.cells, dtype=np.int64)
    reg = np.zeros(mesh.n_cells, dtype=np.int64)
    mu_inv = np.eye(3, dtype=complex)[None]
    eps = np.eye(3, dtype=complex)[None]
    le = LOCAL_EDGES[3]

    cases = {
        "csr_matvec": lambda k: k.csr_matvec(indptr, indices, data, x),
        "csr_rmatvec": lambda k: k.csr_rmatvec(indptr, indices, data, x, a.shape[1]),
        "whitney_local": lambda k: k.whitney_local(v, c, reg, mu_inv, eps, le),
    }
    print(f"mesh: {mesh.n_cells} cells, matrix {a.shape[0]} rows, {a.nnz} nonzeros")
    print(f"{'kernel':<15} {'numpy [ms]':>12} {'cython [ms]':>12} {'speedup':>8} {'max diff':>10}")
    for name, fn in cases.items():
        r_slow, r_fast = fn(slow), fn(fast)
        if isinstance(r_slow, tuple):
            diff = max(float(np.max(np.abs(np.asarray(p) - np.asarray(q)))) for p, q in zip(r_slow, r_fast))
        else:
            diff = float(np.max(np.abs(r_slow - np.asarray(r_fast))))
        ts = _best(lambda: fn(slow), args.repeat)
        tf = _best(lambda: fn(fast), args.repeat)
        print(f"{name:<15} {1e3 * ts:>12.2f} {1e3 * tf:>12.2f} {ts / tf:>8.1f} {diff:>10.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

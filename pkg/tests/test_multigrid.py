import json
import warnings

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from maxwell_mg.assembly import assemble_level
from maxwell_mg.eigen import solve_coarse_eigen
from maxwell_mg.materials import vacuum
from maxwell_mg.mesh import generate_mesh, refine_uniform
from maxwell_mg.multigrid import (Hierarchy, Scheme, SchemeConfig, SchemeError, build_hierarchy, rayleigh_quotient,
                                  run_scheme, shifted_solve)
from maxwell_mg.oracle import dense_eigenpairs, inverse_iteration


@pytest.fixture(scope="module")
def hier():
    """Cube n=3 plus two uniform refinements."""
    return build_hierarchy(generate_mesh("UnitCube", 3), vacuum(), 2)


@pytest.fixture(scope="module")
def coarse(hier):
    return solve_coarse_eigen(hier[0], 5)


def test_rayleigh_quotient_basics(cube3_ops):
    w, V = dense_eigenpairs(cube3_ops)
    assert rayleigh_quotient(cube3_ops, V[:, 0]) == pytest.approx(w[0], rel=1e-12)
    with pytest.raises(ValueError):
        rayleigh_quotient(cube3_ops, np.zeros(cube3_ops.n_edge))


@pytest.mark.parametrize("scale", [1.0, 3.7 - 2j])
def test_eigenvalue_error_identity(cube3_ops, scale):
    """R(v) - lam = a(v-u, v-u)/m(v, v) - lam m(v-u, v-u)/m(v, v) for a discrete eigenpair (lam, u)."""
    ops = cube3_ops
    w, V = dense_eigenpairs(ops)
    lam, u = w[2], scale * V[:, 2]
    rng = np.random.default_rng(4)
    for eps in (1e-1, 1.0, 10.0):
        v = u + eps * (rng.standard_normal(ops.n_edge) + 1j * rng.standard_normal(ops.n_edge))
        e = v - u
        m = np.vdot(v, ops.M @ v).real
        rhs = (np.vdot(e, ops.S @ e).real - lam * np.vdot(e, ops.M @ e).real) / m
        lhs = rayleigh_quotient(ops, v) - lam
        assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1e-12 * lam)


def test_no_fine_levels_returns_coarse_pair(hier, coarse):
    est, trace = run_scheme(hier, SchemeConfig(levels=0, target=1, cluster_size=3), coarse)
    for e, p in zip(est, coarse.pairs[:3]):
        assert e.lam == p.lam
        assert np.array_equal(e.vector, p.vector)
    assert len(trace.records) == 3


def test_fixed_shift_beyond_levels_equals_rayleigh(hier, coarse):
    rq, _ = run_scheme(hier, SchemeConfig(Scheme.RayleighQuotient, levels=2, target=4, cluster_size=2), coarse)
    fs, _ = run_scheme(hier, SchemeConfig(Scheme.FixedShift, levels=2, target=4, cluster_size=2, i0=2), coarse)
    for a, b in zip(rq, fs):
        assert abs(a.lam - b.lam) <= 1e-14 * a.lam
        assert np.abs(a.vector - b.vector).max() <= 1e-14 * np.abs(a.vector).max()


def test_shift_levels():
    cfg = SchemeConfig(Scheme.FixedShift, levels=4, i0=1)
    assert [cfg.shift_level(i) for i in range(1, 5)] == [0, 1, 1, 1]
    cfg = SchemeConfig(Scheme.RayleighQuotient, levels=3, i0=1)
    assert [cfg.shift_level(i) for i in range(1, 4)] == [0, 1, 2]
    with pytest.raises(SchemeError):
        SchemeConfig(levels=2, tol=[1e-8])
    with pytest.raises(SchemeError):
        SchemeConfig(target=0)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_scheme_tracks_direct_values(hier, coarse, scheme):
    est, trace = run_scheme(hier, SchemeConfig(scheme, levels=2, target=1, cluster_size=3), coarse)
    for level in (1, 2):
        direct = inverse_iteration(hier[level], 0.99 * est[0].lam, 3).eigenvalues
        got = np.sort([r.lam for r in trace.records if r.level == level])
        assert np.max(np.abs(got - direct) / direct) <= 1e-3
    # the estimates approach 2 pi^2 from below level by level
    errs = [abs(np.mean([r.lam for r in trace.records if r.level == i]) - 2 * np.pi ** 2) for i in range(3)]
    assert errs[0] > errs[1] > errs[2]
    for e in est:
        assert abs(hier[2].a_norm(e.vector) - 1) <= 1e-12


def test_scaling_invariance(hier, coarse):
    cfg = SchemeConfig(levels=1, target=1, cluster_size=1)
    P = hier.prolongation(1)
    u = coarse.pairs[0].vector
    a = shifted_solve(hier[1], coarse.pairs[0].lam, u, P)
    b = shifted_solve(hier[1], coarse.pairs[0].lam, (2.5 + 1j) * u, P)
    phase = np.vdot(a.u, b.u) / abs(np.vdot(a.u, b.u))
    assert np.allclose(b.u, phase * a.u, atol=1e-10)
    assert abs(hier[1].a_norm(a.u) - 1) <= 1e-12
    assert hier[1].big_a_norm(a.u_hat) == pytest.approx(1.0, abs=1e-12)
    assert cfg.level_tol(1) == 1e-10


def test_error_reduction_one_level(hier, coarse):
    lam_H = coarse.pairs[3].lam
    sol = shifted_solve(hier[1], lam_H, coarse.pairs[3].vector, hier.prolongation(1))
    lam = rayleigh_quotient(hier[1], sol.u)
    direct = inverse_iteration(hier[1], lam_H, 1).eigenvalues[0]
    assert abs(lam - direct) < abs(lam_H - direct)


def test_divergence_of_shifted_solution(hier, coarse):
    """G^H S = 0 gives B u' = -B P u / shift exactly for the raw solution."""
    P = hier.prolongation(1)
    rng = np.random.default_rng(1)
    u = rng.standard_normal(hier[0].n_edge)
    shift = 12.0
    sol = shifted_solve(hier[1], shift, u, P, tol=1e-12)
    lhs = hier[1].B @ sol.raw
    rhs = -(hier[1].B @ (P @ u)) / shift
    assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(rhs)
    # a coarse divergence-free field is generally not divergence free on the fine level
    v = coarse.pairs[0].vector
    assert np.linalg.norm(hier[0].B @ v) <= 1e-9 * np.linalg.norm(v)
    sol = shifted_solve(hier[1], shift, v, P, tol=1e-12)
    lhs, rhs = hier[1].B @ sol.raw, -(hier[1].B @ (P @ v)) / shift
    assert np.linalg.norm(rhs) > 1e-6 * np.linalg.norm(sol.raw)
    assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(rhs)


def test_eigenpair_as_shift_and_rhs():
    """Shift at (or next to) a discrete eigenvalue amplifies its eigendirection."""
    ops = assemble_level(generate_mesh("UnitCube", 3), vacuum())
    w, V = dense_eigenpairs(ops)
    sol = shifted_solve(ops, w[0], V[:, 0])  # dense LU, exact shift
    assert rayleigh_quotient(ops, sol.u) == pytest.approx(w[0], abs=1e-8)
    # Krylov path: the exactly singular system is inconsistent, so shift off by 1e-9
    sol = shifted_solve(ops, w[0] * (1 + 1e-9), V[:, 0], dense_threshold=0, max_iter=300)
    assert rayleigh_quotient(ops, sol.u) == pytest.approx(w[0], abs=1e-8)


def test_unshifted_solve_residual(hier):
    ops = hier[1]
    rng = np.random.default_rng(6)
    v = rng.standard_normal(ops.n_edge)
    G, M = ops.G.to_scipy(), ops.M.to_scipy()
    v = v - G @ spla.spsolve((G.T @ M @ G).tocsc(), G.T @ (M @ v))  # consistent with the kernel of S
    sol = shifted_solve(ops, 0.0, v, tol=1e-10, dense_threshold=0)
    assert sol.report.converged
    assert np.linalg.norm(ops.M @ v - ops.S @ sol.raw) <= 1e-10 * np.linalg.norm(ops.M @ v)


def test_zero_mode_target_rejected():
    h = build_hierarchy(generate_mesh("CubeCavity", 2), vacuum(), 0)
    res = solve_coarse_eigen(h[0], 2)
    with pytest.raises(SchemeError, match="zero mode"):
        run_scheme(h, SchemeConfig(levels=0, target=1), res)


def test_bad_hierarchies(hier, coarse):
    with pytest.raises(SchemeError):
        run_scheme(hier, SchemeConfig(levels=3, target=1), coarse)
    with pytest.raises(SchemeError):
        run_scheme(hier, SchemeConfig(levels=1, target=5, cluster_size=2), coarse)
    other = assemble_level(refine_uniform(generate_mesh("UnitCube", 3)), vacuum())
    with pytest.raises(SchemeError, match="nested"):
        Hierarchy([hier[0], hier[1], other])


def test_cluster_mismatch_warns(hier, coarse):
    with pytest.warns(UserWarning, match="does not match"):
        run_scheme(hier, SchemeConfig(levels=0, target=1, cluster_size=2), coarse)


def test_trace_jsonl(tmp_path, hier, coarse):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _, trace = run_scheme(hier, SchemeConfig(levels=1, target=4, cluster_size=2), coarse)
    trace.write_jsonl(tmp_path / "t.jsonl")
    rows = [json.loads(line) for line in (tmp_path / "t.jsonl").read_text().splitlines()]
    assert [r["level"] for r in rows] == [0, 0, 1, 1]
    assert rows[2]["shift"] == pytest.approx(coarse.pairs[3].lam)
    assert trace.lambdas(0) == [rows[0]["lam"], rows[2]["lam"]]

import numpy as np
import pytest

from maxwell_mg.materials import (ANISOTROPIC_MU, MaterialError, MaterialMap, coercivity_constants,
                                  validate_materials, vacuum)


def test_vacuum_constants():
    c = coercivity_constants(vacuum())
    assert (c.gamma, c.beta, c.shift) == (1.0, 1.0, 1.0)


def test_piecewise_eps():
    m = MaterialMap({0: np.eye(3), 1: np.eye(3)}, {0: np.eye(3), 1: 2 * np.eye(3)})
    c = coercivity_constants(m)
    assert c.gamma == pytest.approx(1.0)
    assert c.beta == pytest.approx(1.0)


def test_anisotropic_mu_gamma():
    # oracle: dense Hermitian eigensolve of the 3x3 matrix
    lam_max = np.linalg.eigvalsh(ANISOTROPIC_MU).max()
    c = coercivity_constants(MaterialMap({0: ANISOTROPIC_MU}, {0: np.eye(3)}))
    assert c.gamma == pytest.approx(1.0 / lam_max, rel=1e-14)
    assert np.allclose(ANISOTROPIC_MU, ANISOTROPIC_MU.conj().T)
    assert validate_materials(MaterialMap({0: ANISOTROPIC_MU}, {0: np.eye(3)})).passed


def test_anti_hermitian_perturbation_detected():
    mu = np.eye(3, dtype=complex)
    mu[0, 1] += 1e-6
    diag = validate_materials(MaterialMap({0: mu}, {0: np.eye(3)}))
    assert not diag.passed
    assert diag.failures()[0].hermitian_defect == pytest.approx(5e-7, rel=1e-6)
    with pytest.raises(MaterialError):
        coercivity_constants(MaterialMap({0: mu}, {0: np.eye(3)}))


def test_indefinite_eps_rejected():
    m = MaterialMap({0: np.eye(3)}, {0: np.diag([1.0, -1.0, 1.0])})
    assert not validate_materials(m).passed
    with pytest.raises(MaterialError, match="positive definite"):
        coercivity_constants(m)


def test_shape_errors():
    with pytest.raises(MaterialError):
        MaterialMap({0: np.eye(2)}, {0: np.eye(3)})
    with pytest.raises(MaterialError):
        MaterialMap({0: np.eye(3)}, {1: np.eye(3)})
    two_d = vacuum(2)
    assert two_d.mu[0].shape == (1, 1) and two_d.eps[0].shape == (2, 2)


def test_coercivity_inequalities_random():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        mu = a @ a.conj().T + 0.5 * np.eye(3)
        b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        eps = b @ b.conj().T + 0.5 * np.eye(3)
        mu, eps = 0.5 * (mu + mu.conj().T), 0.5 * (eps + eps.conj().T)
        m = MaterialMap({0: mu, 1: np.eye(3)}, {0: eps, 1: 3 * np.eye(3)})
        c = coercivity_constants(m)
        xi = rng.standard_normal((100, 3)) + 1j * rng.standard_normal((100, 3))
        n2 = np.sum(np.abs(xi) ** 2, axis=1)
        for r in (0, 1):
            q_mu = np.einsum("ni,ij,nj->n", xi.conj(), np.linalg.inv(m.mu[r]), xi).real
            q_eps = np.einsum("ni,ij,nj->n", xi.conj(), m.eps[r], xi).real
            assert np.all(q_mu >= c.gamma * n2 * (1 - 1e-12))
            assert np.all(q_eps >= c.beta * n2 * (1 - 1e-12))

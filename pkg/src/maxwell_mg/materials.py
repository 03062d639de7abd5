"""Piecewise constant Hermitian material tensors and their coercivity bounds."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "MaterialError",
    "MaterialMap",
    "CoercivityConstants",
    "RegionDiagnostics",
    "coercivity_constants",
    "validate_materials",
    "vacuum",
    "ANISOTROPIC_MU",
]

HERMITIAN_TOL = 1e-14

# complex permeability used for the anisotropic thick-L runs
ANISOTROPIC_MU = np.array([
    [2, 1 - 2j, -1j],
    [1 + 2j, 4, 1j],
    [1j, -1j, 5],
], dtype=complex)


class MaterialError(ValueError):
    def __init__(self, message: str, region: int | None = None):
        self.region = region
        super().__init__(message if region is None else f"region {region}: {message}")


@dataclass(frozen=True)
class MaterialMap:
    """Per-region ``mu`` and ``eps``.

    In 3D both are 3x3 complex Hermitian matrices. In 2D ``mu`` is a 1x1
    matrix (curl is scalar) and ``eps`` is 2x2.
    """

    mu: Mapping[int, np.ndarray]
    eps: Mapping[int, np.ndarray]
    dimension: int = 3

    def __post_init__(self):
        if set(self.mu) != set(self.eps):
            raise MaterialError("mu and eps must be declared for the same regions")
        d = self.dimension
        mus, epss = {}, {}
        for r in self.mu:
            mu = np.atleast_2d(np.asarray(self.mu[r], dtype=complex))
            eps = np.atleast_2d(np.asarray(self.eps[r], dtype=complex))
            mu_shape = (1, 1) if d == 2 else (3, 3)
            if mu.shape != mu_shape or eps.shape != (d, d):
                raise MaterialError(f"bad tensor shapes {mu.shape}, {eps.shape} for d={d}", r)
            mus[int(r)], epss[int(r)] = mu, eps
        object.__setattr__(self, "mu", mus)
        object.__setattr__(self, "eps", epss)

    @property
    def regions(self) -> list[int]:
        return sorted(self.mu)

    def mu_inv(self, region: int) -> np.ndarray:
        return np.linalg.inv(self.mu[region])

    def stacked(self, regions: np.ndarray | None = None):
        """Arrays (nr, k, k) of mu^-1 and eps indexed by ``regions`` (default: all)."""
        regions = self.regions if regions is None else list(regions)
        mu_inv = np.stack([self.mu_inv(r) for r in regions])
        eps = np.stack([self.eps[r] for r in regions])
        return mu_inv, eps


def vacuum(dimension: int = 3, regions=(0,)) -> MaterialMap:
    one = np.eye(1 if dimension == 2 else 3)
    return MaterialMap({r: one.copy() for r in regions},
                       {r: np.eye(dimension) for r in regions}, dimension)


@dataclass(frozen=True)
class CoercivityConstants:
    gamma: float
    beta: float

    @property
    def shift(self) -> float:
        return self.gamma / self.beta


@dataclass
class RegionDiagnostics:
    region: int
    which: str
    hermitian_defect: float
    eig_min: float
    eig_max: float

    @property
    def ok(self) -> bool:
        return self.hermitian_defect <= HERMITIAN_TOL and self.eig_min > 0


@dataclass
class MaterialDiagnostics:
    regions: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.regions)

    def failures(self):
        return [r for r in self.regions if not r.ok]


def _hermitian_defect(a: np.ndarray) -> float:
    scale = np.abs(a).max()
    if scale == 0:
        return 0.0
    return float(np.abs(a - a.conj().T).max() / 2 / scale)


def validate_materials(materials: MaterialMap) -> MaterialDiagnostics:
    """Hermitian defect (max-norm of the anti-Hermitian part relative to the
    largest entry) and eigenvalue range of every tensor."""
    out = MaterialDiagnostics()
    for r in materials.regions:
        for which, a in (("mu", materials.mu[r]), ("eps", materials.eps[r])):
            w = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
            out.regions.append(RegionDiagnostics(r, which, _hermitian_defect(a),
                                                 float(w[0]), float(w[-1])))
    return out


def coercivity_constants(materials: MaterialMap) -> CoercivityConstants:
    """gamma = min 1/lambda_max(mu), beta = min lambda_min(eps) over regions."""
    diag = validate_materials(materials)
    bad = diag.failures()
    if bad:
        b = bad[0]
        why = "not Hermitian" if b.hermitian_defect > HERMITIAN_TOL else "not positive definite"
        raise MaterialError(f"{b.which} is {why}", b.region)
    gamma = min(1.0 / r.eig_max for r in diag.regions if r.which == "mu")
    beta = min(r.eig_min for r in diag.regions if r.which == "eps")
    return CoercivityConstants(gamma, beta)

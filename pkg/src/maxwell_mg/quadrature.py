"""Symmetric quadrature rules on the reference simplex.

Points are barycentric tuples; weights are normalised to sum to one, so a
physical integral is ``volume * sum(w * f(points))``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = ["QuadratureRule", "simplex_rule", "high_order_rule"]


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


_A3 = 0.5854101966249685
_B3 = 0.1381966011250105


def simplex_rule(dim: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """(points, weights) exact to ``degree`` (<= 2) on the d-simplex."""
    if degree <= 1:
        return np.full((1, dim + 1), 1.0 / (dim + 1)), np.ones(1)
    if degree == 2:
        if dim == 3:
            pts = np.full((4, 4), _B3)
            np.fill_diagonal(pts, _A3)
            return pts, np.full(4, 0.25)
        if dim == 2:
            pts = np.full((3, 3), 1.0 / 6.0)
            np.fill_diagonal(pts, 2.0 / 3.0)
            return pts, np.full(3, 1.0 / 3.0)
    raise ValueError(f"no rule for dim={dim}, degree={degree}")


def high_order_rule(dim: int, n: int = 8) -> QuadratureRule:
    """Collapsed Gauss-Legendre (Duffy) rule, exact to degree 2n-1-dim.

    Independent of :func:`simplex_rule`; used as a test oracle.
    """
    g, gw = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    gw = 0.5 * gw
    pts, wts = [], []
    for idx in itertools.product(range(n), repeat=dim):
        t = g[list(idx)]
        # Duffy map from the unit cube to the simplex
        x = np.empty(dim)
        rem = 1.0
        jac = 1.0
        for k in range(dim):
            x[k] = rem * t[k]
            jac *= rem
            rem -= x[k]
        pts.append(np.concatenate([[1.0 - x.sum()], x]))
        wts.append(np.prod(gw[list(idx)]) * jac)
    w = np.array(wts)
    return QuadratureRule(np.array(pts), w / w.sum(), 2 * n - 1 - dim)

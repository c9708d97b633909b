"""Quadrature rules on the reference triangle and the reference edge.

The triangle rule is a collapsed (Duffy) tensor product of Gauss-Legendre
rules; with ``n`` points per direction it integrates polynomials of total
degree ``2n - 2`` exactly on the reference triangle.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Points/weights on the reference triangle {x, y >= 0, x + y <= 1}
    (weights sum to 1/2) and on the reference edge [0, 1] (weights sum to 1).
    """

    tri_points: np.ndarray
    tri_weights: np.ndarray
    edge_points: np.ndarray
    edge_weights: np.ndarray
    tri_degree: int
    edge_degree: int

    @property
    def barycentric(self):
        """Barycentric coordinates (n, 3) of the triangle points."""
        x, y = self.tri_points[:, 0], self.tri_points[:, 1]
        return np.column_stack([1.0 - x - y, x, y])


def gauss_01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(degree):
    """Collapsed Gauss rule exact for total degree ``degree``."""
    n = max(1, (degree + 3) // 2)
    u, wu = gauss_01(n)
    v, wv = gauss_01(n)
    # x = u, y = v (1 - u), dx dy = (1 - u) du dv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu * (1.0 - u), wv)
    pts = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
    return pts, ww.ravel()


def make_rule(tri_degree=6, edge_degree=7):
    tp, tw = triangle_rule(tri_degree)
    ep, ew = gauss_01((edge_degree + 2) // 2)
    return QuadratureRule(tp, tw, ep, ew, tri_degree, edge_degree)


DEFAULT_RULE = make_rule()

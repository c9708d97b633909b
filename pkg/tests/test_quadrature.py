from math import factorial

import numpy as np
import pytest

from sdg_ibm.quadrature import DEFAULT_RULE, gauss_01, make_rule, triangle_rule


def exact_monomial(a, b):
    # integral of x^a y^b over the reference triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("a,b", [(a, b) for a in range(7) for b in range(7) if a + b <= 6])
def test_triangle_rule_exact_to_degree_six(a, b):
    x, y = DEFAULT_RULE.tri_points.T
    val = np.sum(DEFAULT_RULE.tri_weights * x ** a * y ** b)
    assert abs(val - exact_monomial(a, b)) <= 1e-14


@pytest.mark.parametrize("k", range(8))
def test_edge_rule_exact_to_degree_seven(k):
    s, w = DEFAULT_RULE.edge_points, DEFAULT_RULE.edge_weights
    assert abs(np.sum(w * s ** k) - 1.0 / (k + 1)) <= 1e-14


def test_weights_positive_and_normalised():
    assert np.all(DEFAULT_RULE.tri_weights > 0)
    assert np.all(DEFAULT_RULE.edge_weights > 0)
    assert DEFAULT_RULE.tri_weights.sum() == pytest.approx(0.5, abs=1e-15)
    assert DEFAULT_RULE.edge_weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_points_inside_reference_triangle():
    lam = DEFAULT_RULE.barycentric
    assert np.all(lam > 0)
    assert np.allclose(lam.sum(axis=1), 1.0)


def test_higher_degree_rule():
    pts, w = triangle_rule(10)
    x, y = pts.T
    assert abs(np.sum(w * x ** 4 * y ** 6) - exact_monomial(4, 6)) < 1e-15
    s, ws = gauss_01(3)
    assert abs(np.sum(ws * s ** 5) - 1 / 6) < 1e-15
    assert make_rule(4, 5).tri_degree == 4

"""Manufactured steady Stokes problem, derived symbolically.

Stream function psi = x^2 (1-x)^2 y^2 (1-y)^2 gives a divergence-free
velocity vanishing on the boundary; pressure x^3 - y^3 has zero mean.
"""
from functools import lru_cache

import numpy as np
import sympy as sy

from sdg_ibm.solver import LinearizedProblem, load_vector, solve_linearized

from conftest import make_core


@lru_cache(maxsize=None)
def exact_functions(alpha=1.0, mu=1.0):
    x, y = sy.symbols("x y")
    psi = x ** 2 * (1 - x) ** 2 * y ** 2 * (1 - y) ** 2
    u = [sy.diff(psi, y), -sy.diff(psi, x)]
    p = x ** 3 - y ** 3
    f = [alpha * u[c] - mu * (sy.diff(u[c], x, 2) + sy.diff(u[c], y, 2)) + sy.diff(p, (x, y)[c])
         for c in range(2)]
    assert sy.simplify(sy.diff(u[0], x) + sy.diff(u[1], y)) == 0
    lam = lambda exprs: [sy.lambdify((x, y), e, "numpy") for e in exprs]
    return lam(u), lam(f)


def _vec(funcs):
    return lambda X: np.column_stack([np.broadcast_to(g(X[:, 0], X[:, 1]), X[:, 0].shape) for g in funcs])


def stokes_errors(N, alpha=1.0, mu=1.0):
    """(L2 error of u_h, L2 error of u*, state, core) on the N x N mesh."""
    u_ex, f = exact_functions(alpha, mu)
    core = make_core(N)
    problem = LinearizedProblem(alpha, mu, 1.0, None, load_vector(core, _vec(f)))
    state = solve_linearized(problem, core)
    xq, wq = core.quad_x, core.quad_w
    from sdg_ibm.quadrature import DEFAULT_RULE

    lam = DEFAULT_RULE.barycentric
    uh = [np.einsum("qk,ek->eq", lam, core.U.local(c)) for c in (state.u1, state.u2)]
    us = state.V.evaluate_in_macros(core.mesh.macro_of, xq)
    exact = [g(xq[..., 0], xq[..., 1]) for g in u_ex]
    eh = np.sqrt(sum((wq * (uh[c] - exact[c]) ** 2).sum() for c in range(2)))
    es = np.sqrt(sum((wq * (us[..., c] - exact[c]) ** 2).sum() for c in range(2)))
    return eh, es, state, core

"""Staggered finite element spaces for k = 1.

Every space is realised as element-local P1 Lagrange data (values at the
three nodes of each sub-triangle) together with a sparse prolongation
``T`` mapping global coefficients to the stacked local values:

    local = T @ global

* velocity component (U^h): continuous across interior coarse edges, zero
  on the boundary, free across F_p edges;
* gradient (W^h): vector P1, normal component continuous across F_p edges;
  its basis is an orthonormal null-space basis of the normal-matching
  constraints, computed per macro-element;
* pressure (P^h): continuous P1 on each macro-element, free across F_u.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidEvaluation, UnsupportedDegree
from .mesh import CONTAINS_TOL

VELOCITY = "velocity"
GRADIENT = "gradient"
PRESSURE = "pressure"

P1_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0  # times element area


class DofLayout:
    """Global numbering of one staggered space.

    ``n_local`` is the number of local values per element (3 for scalar
    spaces, 6 for the gradient space ordered ``[x0, x1, x2, y0, y1, y2]``).
    """

    def __init__(self, tag, mesh, T, n_local):
        self.tag = tag
        self.mesh = mesh
        self.T = T.tocsr()
        self.n_local = n_local
        self.dim = T.shape[1]

    def local(self, coeffs):
        """Element-local nodal values, shape (n_elements, n_local)."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != self.dim:
            raise InvalidEvaluation(f"expected {self.dim} coefficients, got {coeffs.shape[0]}")
        return (self.T @ coeffs).reshape(self.mesh.n_elements, self.n_local, *coeffs.shape[1:])

    def constraint_matrix(self):
        """Explicit linear constraints on the stacked local values whose
        null space is the space itself."""
        return _CONSTRAINTS[self.tag](self.mesh)

    def __repr__(self):
        return f"DofLayout({self.tag!r}, dim={self.dim})"


@dataclass
class DiscreteField:
    layout: DofLayout
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.layout.dim,):
            raise InvalidEvaluation("coefficient length does not match layout dimension")


def _velocity_layout(mesh):
    coarse = mesh.coarse
    n_el = mesh.n_elements
    rows, cols = [], []
    dof = 0
    for e in range(coarse.n_edges):
        els = mesh.patch(e)
        interior = len(els) == 2
        if interior:
            end_dof = {int(coarse.edges[e, 0]): dof, int(coarse.edges[e, 1]): dof + 1}
            dof += 2
        for el in els:
            if interior:
                for k in (0, 1):
                    rows.append(3 * el + k)
                    cols.append(end_dof[int(mesh.elements[el, k])])
            rows.append(3 * el + 2)
            cols.append(dof)
            dof += 1
    T = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(3 * n_el, dof))
    return DofLayout(VELOCITY, mesh, T, 3)


def _pressure_layout(mesh):
    nt = mesh.n_macros
    t = np.repeat(np.arange(nt), 3)
    j = np.tile(np.arange(3), nt)
    cols = np.column_stack([4 * t + j, 4 * t + (j + 1) % 3, 4 * t + 3]).ravel()
    rows = np.arange(3 * mesh.n_elements)
    T = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(3 * mesh.n_elements, 4 * nt))
    return DofLayout(PRESSURE, mesh, T, 3)


def _gradient_macro_constraints(mesh):
    """Per-macro (6 x 18) normal-matching constraint blocks."""
    nt = mesh.n_macros
    G = np.zeros((nt, 6, 18))
    for j in range(3):
        # F_p edge v_j -- nu shared by sub j (nodes 0, 2) and sub j-1 (nodes 1, 2)
        e = mesh.element_edges[3 * np.arange(nt) + j, 1]
        n = mesh.normals[e]
        jm = (j - 1) % 3
        for r, (kp, km) in enumerate(((0, 1), (2, 2))):
            row = 2 * j + r
            for c in range(2):
                G[:, row, 6 * j + 3 * c + kp] = n[:, c]
                G[:, row, 6 * jm + 3 * c + km] = -n[:, c]
    return G


def _gradient_layout(mesh):
    G = _gradient_macro_constraints(mesh)
    _, s, vh = np.linalg.svd(G)
    Z = vh[:, 6:, :].transpose(0, 2, 1)  # (nt, 18, 12)
    # fix the sign of every basis vector for reproducibility
    pivot = np.argmax(np.abs(Z), axis=1)
    sign = np.sign(np.take_along_axis(Z, pivot[:, None, :], axis=1))
    Z = Z * sign
    T = sp.block_diag(list(Z), format="csr")
    return DofLayout(GRADIENT, mesh, T, 6)


def build_layouts(mesh, k=1):
    """Velocity-component, gradient and pressure layouts on ``mesh``."""
    if k != 1:
        raise UnsupportedDegree(f"only k = 1 is implemented, got k = {k}")
    return _velocity_layout(mesh), _gradient_layout(mesh), _pressure_layout(mesh)


# ----------------------------------------------------------------------
# explicit constraint systems (used as an independent rank oracle)

def _velocity_constraints(mesh):
    rows = []
    n_loc = 3 * mesh.n_elements
    for e in mesh.F_u:
        els = mesh.patch(e)
        if len(els) == 2:
            a, b = els
            for k in (0, 1):
                v = mesh.elements[a, k]
                kb = int(np.flatnonzero(mesh.elements[b, :2] == v)[0])
                r = np.zeros(n_loc)
                r[3 * a + k], r[3 * b + kb] = 1.0, -1.0
                rows.append(r)
        else:
            for k in (0, 1):
                r = np.zeros(n_loc)
                r[3 * els[0] + k] = 1.0
                rows.append(r)
    return np.array(rows)


def _pressure_constraints(mesh):
    rows = []
    n_loc = 3 * mesh.n_elements
    for e in mesh.F_p:
        a, b = mesh.edge_elements[e]
        for v in mesh.edges[e]:
            ka = int(np.flatnonzero(mesh.elements[a] == v)[0])
            kb = int(np.flatnonzero(mesh.elements[b] == v)[0])
            r = np.zeros(n_loc)
            r[3 * a + ka], r[3 * b + kb] = 1.0, -1.0
            rows.append(r)
    return np.array(rows)


def _gradient_constraints(mesh):
    rows = []
    n_loc = 6 * mesh.n_elements
    for e in mesh.F_p:
        a, b = mesh.edge_elements[e]
        n = mesh.normals[e]
        for v in mesh.edges[e]:
            ka = int(np.flatnonzero(mesh.elements[a] == v)[0])
            kb = int(np.flatnonzero(mesh.elements[b] == v)[0])
            r = np.zeros(n_loc)
            for c in range(2):
                r[6 * a + 3 * c + ka] += n[c]
                r[6 * b + 3 * c + kb] -= n[c]
            rows.append(r)
    return np.array(rows)


_CONSTRAINTS = {
    VELOCITY: _velocity_constraints,
    GRADIENT: _gradient_constraints,
    PRESSURE: _pressure_constraints,
}


# ----------------------------------------------------------------------
# evaluation

def p1_gradients(mesh, elements=None):
    """Gradients of the three barycentric functions, shape (n, 3, 2)."""
    P = mesh.vertex_coords(elements)
    d1 = P[:, 1] - P[:, 0]
    d2 = P[:, 2] - P[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    return np.stack([-g1 - g2, g1, g2], axis=1)


def evaluate_field(field, element, x):
    """Value of ``field`` at ``x`` using the polynomial of ``element``
    (one-sided trace on element boundaries)."""
    layout = field.layout
    mesh = layout.mesh
    lam = mesh.barycentric(element, x)
    scale = 1.0
    if np.any(lam < -CONTAINS_TOL * scale):
        raise InvalidEvaluation(f"point {tuple(np.asarray(x))} is not in element {element}")
    loc = layout.local(field.coeffs)[element]
    if layout.n_local == 3:
        return float(lam @ loc)
    return np.array([lam @ loc[:3], lam @ loc[3:]])


def interpolate_p1(layout, func):
    """Coefficients of the nodal interpolant of ``func`` (scalar spaces).

    Nodes shared by several elements take the value from the lowest-indexed
    element; for continuous functions this is the usual interpolant.
    """
    mesh = layout.mesh
    vals = func(mesh.points[mesh.elements].reshape(-1, 2))
    coeffs = np.zeros(layout.dim)
    T = layout.T.tocoo()
    order = np.argsort(T.row, kind="stable")[::-1]
    coeffs[T.col[order]] = vals[T.row[order]]
    return coeffs

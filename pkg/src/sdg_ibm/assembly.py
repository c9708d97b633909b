"""Sparse assembly of the staggered DG forms and the reduced momentum operator.

Matrix shapes (nU = velocity component dim, nW = gradient dim, nP = pressure
dim):

* ``B``  (nU, nW): ``B[i, j] = B_h(Psi_j, v_i)``
* ``C``  (nP, 2 nU): ``C[k, (c, i)] = b_h(v_i e_c, q_k)``
* ``R``  (nU, nW): ``R[i, j] = R_h(Psi_j, v_i)`` for a given convection field
* ``M``  (nW, nW): gradient mass, block diagonal per macro-element
* ``Mt`` (nU, nU): velocity mass

The starred forms (``B*_h``, ``b*_h``, ``R*_h``) have their own assemblers,
written edge-by-edge with the stored normal/jump convention, so that the
adjoint identities can be checked between two independent code paths.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyFailure, InvalidParameter
from .quadrature import DEFAULT_RULE, make_rule
from .spaces import P1_MASS, p1_gradients


def _blockdiag(local):
    """CSR matrix with the dense blocks ``local[e]`` on its diagonal."""
    n, a, b = local.shape
    rows = (np.arange(n)[:, None, None] * a + np.arange(a)[None, :, None]).repeat(b, axis=2)
    cols = (np.arange(n)[:, None, None] * b + np.arange(b)[None, None, :]).repeat(a, axis=1)
    return sp.csr_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(n * a, n * b))


def pair_prolongation(U):
    """Prolongation for the velocity pair, local order [c0 n0..2, c1 n0..2]."""
    T = U.T.tocoo()
    el, k = np.divmod(T.row, 3)
    rows = np.concatenate([6 * el + k, 6 * el + 3 + k])
    cols = np.concatenate([T.col, T.col + U.dim])
    vals = np.concatenate([T.data, T.data])
    return sp.csr_matrix((vals, (rows, cols)), shape=(6 * U.mesh.n_elements, 2 * U.dim))


def element_quadrature(mesh, rule=DEFAULT_RULE):
    """Physical quadrature points (n_el, nq, 2) and weights (n_el, nq)."""
    P = mesh.vertex_coords()
    lam = rule.barycentric
    x = np.einsum("qk,ekd->eqd", lam, P)
    w = 2.0 * mesh.areas[:, None] * rule.tri_weights[None, :]
    return x, w


def _edge_points(mesh, edges, rule):
    P = mesh.points[mesh.edges[edges]]  # (ne, 2, 2)
    s = rule.edge_points
    x = P[:, None, 0, :] + s[None, :, None] * (P[:, None, 1, :] - P[:, None, 0, :])
    w = mesh.h[edges][:, None] * rule.edge_weights[None, :]
    return x, w


def _edge_mass(mesh):
    """Per element and local edge k: integral of lambda_i lambda_j over edge k."""
    M1 = np.zeros((3, 3, 3))
    for k in range(3):
        idx = [i for i in range(3) if i != k]
        for i in idx:
            for j in idx:
                M1[k, i, j] = (2.0 if i == j else 1.0) / 6.0
    lengths = mesh.h[mesh.element_edges]  # (n_el, 3)
    return lengths[:, :, None, None] * M1[None]


@dataclass
class CoreForms:
    mesh: object
    U: object
    W: object
    P: object
    B: sp.csr_matrix
    C: sp.csr_matrix
    M: sp.csr_matrix
    Mt: sp.csr_matrix
    pressure_mean: np.ndarray
    M_blocks: np.ndarray
    Minv: sp.csr_matrix
    T_pair: sp.csr_matrix
    quad_x: np.ndarray = field(repr=False)
    quad_w: np.ndarray = field(repr=False)

    @property
    def laplacian(self):
        """-Delta_h = B M^-1 B^T (cached)."""
        if not hasattr(self, "_neg_lap"):
            self._neg_lap = (self.B @ self.Minv @ self.B.T).tocsr()
        return self._neg_lap


def _macro_inverse(M_blocks):
    cond = np.linalg.cond(M_blocks)
    if not np.all(np.isfinite(cond)) or np.any(cond > 1e14):
        raise AssemblyFailure("singular macro-element mass block (degenerate element?)")
    inv = np.linalg.inv(M_blocks)
    return 0.5 * (inv + inv.transpose(0, 2, 1))


def assemble_core(mesh, layouts, rule=DEFAULT_RULE):
    """Assemble B, C, M, M~ and the macro-local inverse of M."""
    U, W, P = layouts
    n_el = mesh.n_elements
    G = p1_gradients(mesh)  # (n_el, 3, 2): grad lambda_i
    area = mesh.areas
    Em = _edge_mass(mesh)  # (n_el, 3 edges, 3, 3)
    normals = mesh.element_normals  # (n_el, 3, 2)
    fp = mesh.is_fp[mesh.element_edges]  # (n_el, 3)
    coarse_interior = ~mesh.is_fp[mesh.element_edges] & ~mesh.is_boundary[mesh.element_edges]

    # B_h: int Psi . grad v  -  sum_{F_p} int (Psi . n) v
    Bl = np.zeros((n_el, 3, 6))
    for c in range(2):
        Bl[:, :, 3 * c:3 * c + 3] = (G[:, :, c] * area[:, None] / 3.0)[:, :, None]
        Bl[:, :, 3 * c:3 * c + 3] -= np.einsum(
            "ek,ekij->eij", fp * normals[:, :, c], Em)
    # b_h: int v . grad q  -  sum_{F_u^0} int (v . n) q
    Cl = np.zeros((n_el, 3, 6))
    for c in range(2):
        Cl[:, :, 3 * c:3 * c + 3] = (G[:, :, c] * area[:, None] / 3.0)[:, :, None]
        Cl[:, :, 3 * c:3 * c + 3] -= np.einsum(
            "ek,ekij->eji", coarse_interior * normals[:, :, c], Em)

    Ml = area[:, None, None] * P1_MASS[None]
    Mw = np.zeros((n_el, 6, 6))
    Mw[:, :3, :3] = Ml
    Mw[:, 3:, 3:] = Ml

    T_pair = pair_prolongation(U)
    B = (U.T.T @ _blockdiag(Bl) @ W.T).tocsr()
    C = (P.T.T @ _blockdiag(Cl) @ T_pair).tocsr()
    Mt = (U.T.T @ _blockdiag(Ml) @ U.T).tocsr()
    M = (W.T.T @ _blockdiag(Mw) @ W.T).tocsr()

    nt = mesh.n_macros
    Z = np.stack([W.T[18 * t:18 * t + 18, 12 * t:12 * t + 12].toarray() for t in range(nt)])
    Mloc = np.zeros((nt, 18, 18))
    Mw3 = Mw.reshape(nt, 3, 6, 6)
    for j in range(3):
        Mloc[:, 6 * j:6 * j + 6, 6 * j:6 * j + 6] = Mw3[:, j]
    M_blocks = np.einsum("tai,tab,tbj->tij", Z, Mloc, Z)
    Minv = _blockdiag(_macro_inverse(M_blocks))

    pressure_mean = P.T.T @ np.repeat(area / 3.0, 3)
    qx, qw = element_quadrature(mesh, rule)
    return CoreForms(mesh, U, W, P, B, C, M, Mt, pressure_mean, M_blocks, Minv,
                     T_pair, qx, qw)


def assemble_core_adjoint(mesh, layouts, rule=DEFAULT_RULE):
    """Matrices of B*_h (nW, nU) and b*_h (2 nU, nP), assembled edge-wise
    from their own definitions with the stored jump convention."""
    U, W, P = layouts
    n_el = mesh.n_elements
    G = p1_gradients(mesh)
    area = mesh.areas
    T_pair = pair_prolongation(U)

    # -int v div Psi   (rows: local Psi, cols: local v)
    Bv = np.zeros((n_el, 6, 3))
    for c in range(2):
        Bv[:, 3 * c:3 * c + 3, :] = -(G[:, :, c] * area[:, None] / 3.0)[:, :, None]
    # -int q div v     (rows: local v pair, cols: local q)
    Cv = np.zeros((n_el, 6, 3))
    for c in range(2):
        Cv[:, 3 * c:3 * c + 3, :] = -(G[:, :, c] * area[:, None] / 3.0)[:, :, None]
    nl = 6 * n_el, 3 * n_el
    # + sum_{F_u^0} int v [Psi . n]   with v continuous (two-sided average)
    Bstar = _blockdiag(Bv) + _jump_terms(mesh, mesh.F_u0, rule, nl)
    # + sum_{F_p} int q [v . n]       with q continuous
    Cstar = _blockdiag(Cv) + _jump_terms(mesh, mesh.F_p, rule, nl)
    Bstar = (W.T.T @ Bstar @ U.T).tocsr()
    Cstar = (T_pair.T @ Cstar @ P.T).tocsr()
    return Bstar, Cstar


def _jump_terms(mesh, edges, rule, shape):
    """Matrix of  sum_e int_e {s} [Phi . n]  over ``edges``, with rows the
    stacked local vector values (6 per element) and columns the stacked
    local scalar values (3 per element)."""
    x, w = _edge_points(mesh, edges, rule)
    n = mesh.normals[edges]
    sides = mesh.edge_elements[edges]
    rows, cols, vals = [], [], []
    ii, jj = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
    for e_idx in range(len(edges)):
        els = [int(el) for el in sides[e_idx] if el >= 0]
        lams = [mesh.barycentric(el, x[e_idx]) for el in els]
        for side, (el_v, lam_v) in enumerate(zip(els, lams)):
            sign = 1.0 if side == 0 else -1.0  # n . n+ = 1, n . n- = -1
            for el_s, lam_s in zip(els, lams):
                base = np.einsum("q,qi,qj->ij", w[e_idx], lam_v, lam_s) / len(els)
                for c in range(2):
                    rows.append(6 * el_v + 3 * c + ii.ravel())
                    cols.append(3 * el_s + jj.ravel())
                    vals.append((sign * n[e_idx, c] * base).ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)


# ----------------------------------------------------------------------
# convection

def convection_values(core, V):
    """Convection field at the element quadrature points, (n_el, nq, 2)."""
    if V is None:
        return np.zeros_like(core.quad_x)
    return V.evaluate_in_macros(core.mesh.macro_of, core.quad_x)


def assemble_convection(core, V, rule=DEFAULT_RULE):
    """R[i, j] = int (V . Psi_j) v_i; ``V=None`` means V = 0."""
    mesh = core.mesh
    lam = rule.barycentric
    if rule is DEFAULT_RULE:
        Vq, wq = convection_values(core, V), core.quad_w
    else:
        xq, wq = element_quadrature(mesh, rule)
        Vq = np.zeros_like(xq) if V is None else V.evaluate_in_macros(mesh.macro_of, xq)
    Rl = np.zeros((mesh.n_elements, 3, 6))
    for c in range(2):
        Rl[:, :, 3 * c:3 * c + 3] = np.einsum("eq,eq,qi,qj->eij", wq, Vq[:, :, c], lam, lam)
    return (core.U.T.T @ _blockdiag(Rl) @ core.W.T).tocsr()


def assemble_convection_adjoint(core, V):
    """Matrix (nW, nU) of R*_h(v, Psi) = int v (V . Psi), using a different
    (degree 4, exact for this integrand) quadrature rule."""
    rule = make_rule(tri_degree=4, edge_degree=3)
    mesh = core.mesh
    xq, wq = element_quadrature(mesh, rule)
    Vq = np.zeros_like(xq) if V is None else V.evaluate_in_macros(mesh.macro_of, xq)
    lam = rule.barycentric
    Rs = np.zeros((mesh.n_elements, 6, 3))
    for c in range(2):
        for q in range(len(wq[0])):
            Rs[:, 3 * c:3 * c + 3, :] += (wq[:, q] * Vq[:, q, c])[:, None, None] * np.outer(lam[q], lam[q])[None]
    return (core.W.T.T @ _blockdiag(Rs) @ core.U.T).tocsr()


# ----------------------------------------------------------------------
# reduced operators

@dataclass
class MomentumOperator:
    A: sp.csr_matrix
    neg_laplacian: sp.csr_matrix
    convection: sp.csr_matrix
    alpha: float
    mu: float
    rho: float


def convection_operator(core, R):
    """V . grad_h = -1/2 B M^-1 R^T + 1/2 R M^-1 B^T (exactly skew)."""
    X = (core.B @ core.Minv @ R.T).tocsr()
    return (0.5 * (X.T - X)).tocsr()


def build_momentum(core, R, alpha, mu, rho):
    if not (alpha > 0 and mu > 0 and rho > 0):
        raise InvalidParameter("alpha, mu and rho must be positive")
    K = core.laplacian
    if R is None:
        conv = sp.csr_matrix(K.shape)
    else:
        conv = convection_operator(core, R)
    A = (alpha * core.Mt + mu * K + rho * conv).tocsr()
    return MomentumOperator(A, K, conv, alpha, mu, rho)


@dataclass
class Auxiliaries:
    w: np.ndarray
    z: np.ndarray
    w_tilde: np.ndarray
    z_tilde: np.ndarray
    w_hat: np.ndarray
    z_hat: np.ndarray

    @property
    def L(self):
        """Recovered velocity gradient as gradient-space coefficients,
        rows (w_hat, z_hat)."""
        return np.stack([self.w_hat, self.z_hat])


def recover_auxiliaries(core, R, u1, u2, mu, rho):
    """Eliminated unknowns w, z, w~, z~ and the recovered gradient rows."""
    sm = np.sqrt(mu)
    c = rho / (2.0 * sm)
    BT1 = core.B.T @ u1
    BT2 = core.B.T @ u2
    if R is None:
        RT1 = np.zeros_like(BT1)
        RT2 = np.zeros_like(BT2)
    else:
        RT1 = R.T @ u1
        RT2 = R.T @ u2
    Minv = core.Minv
    w = Minv @ (sm * BT1 - c * RT1)
    z = Minv @ (sm * BT2 - c * RT2)
    wt = Minv @ RT1
    zt = Minv @ RT2
    w_hat = (w + c * wt) / sm
    z_hat = (z + c * zt) / sm
    return Auxiliaries(w, z, wt, zt, w_hat, z_hat)


def saddle_matrix(core, A):
    """[[A, 0, C1^T, 0], [0, A, C2^T, 0], [C1, C2, 0, m], [0, 0, m^T, 0]]."""
    m = sp.csr_matrix(core.pressure_mean[:, None])
    return sp.bmat(
        [
            [sp.block_diag([A, A]), core.C.T, None],
            [core.C, None, m],
            [None, m.T, None],
        ],
        format="csc",
    )


def write_coo(matrix, path):
    """Dump a sparse matrix as 'row col value' lines."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")

"""Element-wise P2 postprocessing of the velocity on each macro-element.

On every coarse triangle K = S(nu) the postprocessed velocity u* is a P2
vector field (12 coefficients) fixed by

* flux moments: int_e (u* - u_h) . n v = 0 for v in P1(e), each edge of K;
* one gradient constraint per edge, on the quadratic part of the normal trace:
  int_e d/dt (u* . n) (2s - 1) = int_e (n . {L_h} t) (2s - 1), with {L_h}
  the two-sided average (one-sided on the boundary);
* mean values: int_K (u* - u_h) . grad v = 0 for v in P1(K);
* bubble-weighted curl: int_K (curl u* - (L_21 - L_12)) b_K = 0,
  b_K the product of the barycentric coordinates of K.

When u_h is discretely divergence free the first and third groups force
div u* = 0 pointwise.
"""
import weakref

import numpy as np
from scipy.linalg import lapack

from .errors import PointOutsideDomain, PostprocessFailure
from .quadrature import DEFAULT_RULE

# P2 Lagrange nodes: three vertices, then midpoints of (0,1), (1,2), (2,0)
_MID = ((0, 1), (1, 2), (2, 0))


def p2_basis(lam):
    """P2 Lagrange basis values for barycentrics ``lam`` (..., 3) -> (..., 6)."""
    out = [lam[..., k] * (2.0 * lam[..., k] - 1.0) for k in range(3)]
    out += [4.0 * lam[..., a] * lam[..., b] for a, b in _MID]
    return np.stack(out, axis=-1)


def p2_gradients(lam, glam):
    """Gradients (..., 6, 2) given barycentrics (..., 3) and their
    constant gradients ``glam`` broadcastable to (..., 3, 2)."""
    shape = np.broadcast_shapes(lam.shape[:-1], np.shape(glam)[:-2])
    lam = np.broadcast_to(lam, shape + (3,))
    glam = np.broadcast_to(glam, shape + (3, 2))
    out = [(4.0 * lam[..., k, None] - 1.0) * glam[..., k, :] for k in range(3)]
    out += [4.0 * (lam[..., a, None] * glam[..., b, :] + lam[..., b, None] * glam[..., a, :])
            for a, b in _MID]
    return np.stack(out, axis=-2)


def coarse_geometry(mesh):
    """Vertices (nt, 3, 2), barycentric gradients (nt, 3, 2), areas (nt,)."""
    P = mesh.coarse.vertices[mesh.coarse.triangles]
    d1 = P[:, 1] - P[:, 0]
    d2 = P[:, 2] - P[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    return P, np.stack([-g1 - g2, g1, g2], axis=1), 0.5 * det


def _bary(P, x):
    """Barycentrics of x (n, q, 2) in triangles P (n, 3, 2)."""
    d1 = P[:, None, 1] - P[:, None, 0]
    d2 = P[:, None, 2] - P[:, None, 0]
    r = x - P[:, None, 0]
    det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    l1 = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / det
    l2 = (d1[..., 0] * r[..., 1] - d1[..., 1] * r[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


class PostprocessedVelocity:
    """Piecewise P2 velocity, one polynomial per macro-element.

    ``coeffs`` has shape (n_macros, 2, 6): component, P2 node.
    """

    def __init__(self, mesh, coeffs):
        self.mesh = mesh
        self.coeffs = np.asarray(coeffs, dtype=float)
        self._P, self._glam, self._area = coarse_geometry(mesh)

    @classmethod
    def zero(cls, mesh):
        return cls(mesh, np.zeros((mesh.n_macros, 2, 6)))

    @classmethod
    def interpolate(cls, mesh, func):
        """Nodal P2 interpolant of a vector function ``func(x) -> (n, 2)``."""
        P, _, _ = coarse_geometry(mesh)
        nodes = np.concatenate([P, 0.5 * (P[:, [0, 1, 2]] + P[:, [1, 2, 0]])], axis=1)
        vals = func(nodes.reshape(-1, 2)).reshape(-1, 6, 2)
        return cls(mesh, vals.transpose(0, 2, 1))

    def evaluate_in_macros(self, macros, x):
        """Values at points ``x`` (n, q, 2) using the polynomial of ``macros`` (n,)."""
        lam = _bary(self._P[macros], x)
        phi = p2_basis(lam)
        return np.einsum("nqk,nck->nqc", phi, self.coeffs[macros])

    def gradient_in_macros(self, macros, x):
        """Gradients (n, q, 2 components, 2 directions)."""
        lam = _bary(self._P[macros], x)
        dphi = p2_gradients(lam, self._glam[macros][:, None])
        return np.einsum("nqkd,nck->nqcd", dphi, self.coeffs[macros])

    def divergence_in_macros(self, macros, x):
        g = self.gradient_in_macros(macros, x)
        return g[..., 0, 0] + g[..., 1, 1]

    def locate_macro(self, x):
        return self.mesh.macro_of[self.mesh.locate_point(x)]

    def __call__(self, x):
        """Value at one point; shared coarse edges use the smaller macro."""
        x = np.asarray(x, dtype=float)
        t = self.locate_macro(x)
        return self.evaluate_in_macros(np.array([t]), x[None, None, :])[0, 0]

    def evaluate_points(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if len(xs) == 0:
            return np.zeros((0, 2))
        macros = np.array([self.locate_macro(x) for x in xs])
        return self.evaluate_in_macros(macros, xs[:, None, :])[:, 0, :]

    def max_divergence(self, rule=DEFAULT_RULE):
        """Max |div u*| over the triangle quadrature points of all macros."""
        nt = self.mesh.n_macros
        x = np.einsum("qk,tkd->tqd", rule.barycentric, self._P)
        return float(np.abs(self.divergence_in_macros(np.arange(nt), x)).max())

    def max_abs(self):
        return float(np.abs(self.coeffs).max()) if self.coeffs.size else 0.0


def evaluate_postprocessed(V, x):
    x = np.asarray(x, dtype=float)
    if not V.mesh.in_domain(x):
        raise PointOutsideDomain(f"point {tuple(x)} is outside the domain")
    return V(x)


def _local_systems(mesh, u_loc, L_loc, rule=DEFAULT_RULE):
    """Assemble the (nt, 12, 12) systems and right-hand sides.

    ``u_loc`` (n_el, 2, 3): local velocity values; ``L_loc`` (n_el, 2, 2, 3):
    local values of L_h[c, d] (row c = component, column d = derivative).
    """
    nt = mesh.n_macros
    P, glam, area = coarse_geometry(mesh)
    A = np.zeros((nt, 12, 12))
    b = np.zeros((nt, 12))
    s, ws = rule.edge_points, rule.edge_weights
    row = 0
    tt = np.arange(nt)
    for j in range(3):
        jn = (j + 1) % 3
        d = P[:, jn] - P[:, j]
        h = np.hypot(d[:, 0], d[:, 1])
        tang = d / h[:, None]
        n = np.column_stack([tang[:, 1], -tang[:, 0]])
        lam = np.zeros((len(s), 3))
        lam[:, j] = 1.0 - s
        lam[:, jn] = s
        phi = p2_basis(lam)  # (q, 6)
        dphi = p2_gradients(lam[None], glam[:, None])  # (nt, q, 6, 2)
        wq = h[:, None] * ws[None, :]  # (nt, q)
        el = 3 * tt + j
        uq = (1.0 - s)[None, None, :] * u_loc[el, :, 0, None] + s[None, None, :] * u_loc[el, :, 1, None]
        un = np.einsum("ncq,nc->nq", uq, n)
        # flux moments against 1 and the Legendre polynomial 2s - 1
        for v in (np.ones_like(s), 2.0 * s - 1.0):
            for c in range(2):
                A[:, row, 6 * c:6 * c + 6] = np.einsum("nq,qk,q->nk", wq, phi, v) * n[:, c, None]
            b[:, row] = np.einsum("nq,nq,q->n", wq, un, v)
            row += 1
        # tangential derivative of the normal component against 2s - 1
        dt = np.einsum("nqkd,nd->nqk", dphi, tang)
        for c in range(2):
            A[:, row, 6 * c:6 * c + 6] = np.einsum("nq,nqk,q->nk", wq, dt, 2.0 * s - 1.0) * n[:, c, None]
        xq = P[:, j, None, :] + s[None, :, None] * d[:, None, :]
        e = mesh.element_edges[el, 2]
        other = np.where(mesh.edge_elements[e, 0] == el, mesh.edge_elements[e, 1], mesh.edge_elements[e, 0])
        Lq = ((1.0 - s)[None, :, None, None] * L_loc[el, None, :, :, 0]
              + s[None, :, None, None] * L_loc[el, None, :, :, 1])
        has = other >= 0
        if np.any(has):
            lam_o = _bary(mesh.vertex_coords(other[has]), xq[has])
            Lo = np.einsum("nqk,ncdk->nqcd", lam_o, L_loc[other[has]])
            Lq[has] = 0.5 * (Lq[has] + Lo)
        ntL = np.einsum("nc,nqcd,nd->nq", n, Lq, tang)
        b[:, row] = np.einsum("nq,nq,q->n", wq, ntL, 2.0 * s - 1.0)
        row += 1

    lam_t = DEFAULT_RULE.barycentric
    wt = 2.0 * area[:, None] * DEFAULT_RULE.tri_weights[None, :]
    phi_t = p2_basis(lam_t)
    # mean values
    sub_area = mesh.areas.reshape(nt, 3)
    u_mean = (u_loc.sum(axis=2) / 3.0).reshape(nt, 3, 2)
    for c in range(2):
        A[:, row, 6 * c:6 * c + 6] = np.einsum("nq,qk->nk", wt, phi_t)
        b[:, row] = np.einsum("nj,nj->n", sub_area, u_mean[:, :, c])
        row += 1
    # bubble-weighted curl
    bub = lam_t.prod(axis=1)
    dphi_t = p2_gradients(lam_t[None], glam[:, None])  # (nt, q, 6, 2)
    A[:, row, 0:6] = -np.einsum("nq,q,nqk->nk", wt, bub, dphi_t[..., 1])
    A[:, row, 6:12] = np.einsum("nq,q,nqk->nk", wt, bub, dphi_t[..., 0])
    # int over the three sub-triangles of (L_21 - L_12) * bubble
    curl_loc = L_loc[:, 1, 0, :] - L_loc[:, 0, 1, :]  # (n_el, 3)
    xs = np.einsum("qk,ekd->eqd", lam_t, mesh.vertex_coords())
    ws_sub = 2.0 * mesh.areas[:, None] * DEFAULT_RULE.tri_weights[None, :]
    lam_c = _bary(P[mesh.macro_of], xs)
    val = np.einsum("eq,qk,ek->eq", ws_sub * lam_c.prod(axis=2), lam_t, curl_loc)
    b[:, row] = val.sum(axis=1).reshape(nt, 3).sum(axis=1)
    return A, b


def postprocess(core, u1, u2, aux):
    """Postprocessed velocity from (u_h, L_h) on every macro-element."""
    mesh = core.mesh
    u_loc = np.stack([core.U.local(u1), core.U.local(u2)], axis=1)  # (n_el, 2, 3)
    wl = core.W.local(aux.w_hat)  # (n_el, 6)
    zl = core.W.local(aux.z_hat)
    L_loc = np.stack([wl.reshape(-1, 2, 3), zl.reshape(-1, 2, 3)], axis=1)  # (n_el, 2, 2, 3)
    return postprocess_local(mesh, u_loc, L_loc)


_INVERSES = weakref.WeakKeyDictionary()


def _full_pivot_inverse(A):
    """Inverse of a square matrix through LU with complete pivoting."""
    lu, ipiv, jpiv, info = lapack.dgetc2(A)
    n = A.shape[0]
    inv = np.empty((n, n))
    for j in range(n):
        x, scale = lapack.dgesc2(lu, np.eye(n)[:, j], ipiv, jpiv)
        inv[:, j] = x / scale
    return inv


def local_inverses(mesh, A=None):
    """Row-scaling and inverses of the local systems; geometry only, cached per mesh."""
    if mesh in _INVERSES:
        return _INVERSES[mesh]
    if A is None:
        A, _ = _local_systems(mesh, np.zeros((mesh.n_elements, 2, 3)),
                              np.zeros((mesh.n_elements, 2, 2, 3)))
    scale = np.abs(A).max(axis=2)
    if np.any(scale == 0):
        raise PostprocessFailure("empty row in local postprocessing system")
    A = A / scale[:, :, None]
    if np.any(np.linalg.cond(A) > 1e12):
        raise PostprocessFailure("singular local postprocessing system (degenerate macro?)")
    inv = np.stack([_full_pivot_inverse(a) for a in A])
    _INVERSES[mesh] = (scale, inv)
    return scale, inv


def postprocess_local(mesh, u_loc, L_loc):
    A, b = _local_systems(mesh, u_loc, L_loc)
    scale, inv = local_inverses(mesh, A)
    c = np.einsum("tij,tj->ti", inv, b / scale)
    return PostprocessedVelocity(mesh, c.reshape(-1, 2, 6))


def postprocess_macro(mesh, t, u_loc, L_loc):
    """Postprocess one macro given local data for its three sub-triangles.

    ``u_loc`` (3, 2, 3) and ``L_loc`` (3, 2, 2, 3) are indexed by the
    sub-triangles of macro ``t``; neighbour traces of L_h are not available,
    so the one-sided interior trace is used on every edge.
    """
    from .mesh import StaggeredMesh, CoarseTriangulation  # local: tiny one-macro mesh
    verts = mesh.coarse.vertices[mesh.coarse.triangles[t]]
    single = StaggeredMesh(CoarseTriangulation(verts, np.array([[0, 1, 2]])))
    V = postprocess_local(single, np.asarray(u_loc, float), np.asarray(L_loc, float))
    return V.coeffs[0]

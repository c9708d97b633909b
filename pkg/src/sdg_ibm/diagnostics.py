"""Monitored quantities: enclosed area, energy, CFL parameter, broken seminorm."""
import weakref
from dataclasses import dataclass, fields

import numpy as np

from .solver import l2_norm


@dataclass
class DiagnosticsRecord:
    step: int
    t: float
    area: float
    area_change_pct: float
    E: float
    eta: float
    picard_iters: int
    h_s: float
    h_x: float
    L: float
    blown_up: bool = False

    CSV_COLUMNS = ("step", "t", "area", "area_change_pct", "E", "eta", "picard_iters", "blown_up")

    def csv_row(self):
        out = []
        for name in self.CSV_COLUMNS:
            v = getattr(self, name)
            if isinstance(v, bool):
                out.append(str(int(v)))
            elif isinstance(v, (int, np.integer)):
                out.append(str(int(v)))
            else:
                out.append("%.17g" % v)
        return out

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def polygon_area(ib):
    """Signed shoelace area of the marker polygon."""
    x, y = ib.X[:, 0], ib.X[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def area_change_pct(area, area0):
    return 100.0 * (abs(area) - abs(area0)) / abs(area0)


def curve_energy(ib):
    """(kappa / 2) sum_i (s_i - s_{i-1}) |X'_{i-1/2}|^2."""
    d = ib.derivatives()
    return 0.5 * ib.kappa * float(np.sum(ib.ds * np.einsum("ic,ic->i", d, d)))


def broken_seminorm_local(mesh, u_loc):
    """Broken H^1 seminorm of element-local P1 data ``u_loc`` (n_el, 2, 3)."""
    from .spaces import p1_gradients

    u_loc = np.asarray(u_loc, dtype=float)
    G = p1_gradients(mesh)
    grad = np.einsum("eck,ekd->ecd", u_loc, G)
    total = float(np.sum(mesh.areas[:, None, None] * grad ** 2))
    # jumps: P1 along each edge, |[u]|^2 integrates to h (a^2 + ab + b^2) / 3
    for e in range(mesh.n_edges):
        lo, hi = mesh.edge_elements[e]
        ends = mesh.edges[e]
        vals = []
        for el in (lo, hi):
            if el < 0:
                vals.append(np.zeros((2, 2)))
                continue
            k = [int(np.flatnonzero(mesh.elements[el] == v)[0]) for v in ends]
            vals.append(u_loc[el][:, k])
        j = vals[0] - vals[1]
        a, b = j[:, 0], j[:, 1]
        total += float(np.sum(a * a + a * b + b * b)) / 3.0
    return np.sqrt(total)


def broken_seminorm(core, u1, u2):
    """(||grad_h u||^2 + sum_e h_e^-1 ||[u]||_e^2)^(1/2) for a velocity pair."""
    return _fast_seminorm(core, np.stack([core.U.local(u1), core.U.local(u2)], axis=1))


def _fast_seminorm(core, u_loc):
    mesh = core.mesh
    cache = _edge_tables(mesh)
    G = cache["G"]
    grad = np.einsum("eck,ekd->ecd", u_loc, G)
    total = float(np.sum(mesh.areas[:, None, None] * grad ** 2))
    lo, hi, klo, khi, has = cache["lo"], cache["hi"], cache["klo"], cache["khi"], cache["has"]
    vlo = u_loc[lo[:, None], :, klo].transpose(0, 2, 1)  # (ne, 2 comps, 2 ends)
    vhi = np.where(has[:, None, None], u_loc[np.maximum(hi, 0)[:, None], :, khi].transpose(0, 2, 1), 0.0)
    j = vlo - vhi
    a, b = j[..., 0], j[..., 1]
    total += float(np.sum(a * a + a * b + b * b)) / 3.0
    return np.sqrt(max(total, 0.0))


_EDGE_TABLES = weakref.WeakKeyDictionary()


def _edge_tables(mesh):
    if mesh in _EDGE_TABLES:
        return _EDGE_TABLES[mesh]
    from .spaces import p1_gradients

    lo, hi = mesh.edge_elements[:, 0], mesh.edge_elements[:, 1]
    has = hi >= 0

    def local_index(els):
        els = np.maximum(els, 0)
        nodes = mesh.elements[els]  # (ne, 3)
        return np.stack([np.argmax(nodes == mesh.edges[:, c][:, None], axis=1) for c in range(2)], axis=1)

    tab = dict(G=p1_gradients(mesh), lo=lo, hi=hi, has=has,
               klo=local_index(lo), khi=local_index(hi))
    _EDGE_TABLES[mesh] = tab
    return tab


def energy(core, u, ib, seminorm_sq_history, rho, dt, K0):
    """E^n = rho/2 ||u^n||^2 + dt K0 sum_j |u^j|_{1,*}^2 + curve energy."""
    return (0.5 * rho * l2_norm(core, u) ** 2 + dt * K0 * float(np.sum(seminorm_sq_history))
            + curve_energy(ib))


def element_diameter(P):
    """Diameter of a point cloud (n, 2)."""
    d = P[:, None, :] - P[None, :, :]
    return float(np.sqrt(np.max(np.einsum("ijc,ijc->ij", d, d))))


def segment_patch_diameters(ib, mesh):
    """diam of the union of elements met by each marker segment X_{i-1} X_i."""
    out = np.empty(ib.m)
    X = ib.X
    for i in range(ib.m):
        p, q = X[i - 1], X[i]
        if np.array_equal(p, q):
            els = [mesh.locate_point(p)]
        else:
            els = [el for el, _ in mesh.trace_segment(p, q)]
        pts = mesh.points[np.unique(mesh.elements[els].ravel())]
        out[i] = element_diameter(pts)
    return out


def cfl_eta(ib, mesh, dt, kappa):
    """eta = (kappa dt / h_s)(1 + L / h_x); returns (eta, h_s, h_x, L)."""
    seg = ib.segments()
    L = float(np.max(np.hypot(seg[:, 0], seg[:, 1])))
    h_s = float(np.min(ib.ds))
    h_x = float(np.min(segment_patch_diameters(ib, mesh)))
    return eta_formula(kappa, dt, h_s, h_x, L), h_s, h_x, L


def eta_formula(kappa, dt, h_s, h_x, L):
    return kappa * dt / h_s * (1.0 + L / h_x)

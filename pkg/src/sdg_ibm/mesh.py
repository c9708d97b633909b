"""Coarse triangulation of the unit square and its staggered subdivision.

Every coarse triangle S(nu) is split into three sub-triangles by joining its
centroid nu to the three vertices.  The coarse edges form the set F_u, the
new edges (vertex -> centroid) form F_p.

Numbering conventions used throughout the package:

* points: coarse vertices first, then one centroid per coarse triangle;
* sub-triangle ``3 t + j`` of coarse triangle ``t = (v0, v1, v2)`` has the
  nodes ``(v_j, v_{j+1}, nu_t)`` (counter-clockwise);
* local edge ``k`` of an element is the edge opposite its local node ``k``,
  so local edge 2 is always the coarse edge;
* edges ``0 .. n_coarse_edges - 1`` are the coarse edges (F_u), followed by
  the F_p edges, ``E + 3 t + j`` joining ``v_j`` to ``nu_t``.
"""
import numpy as np

from .errors import InvalidParameter, PointOutsideDomain

# relative tolerance for closed point-in-triangle tests
CONTAINS_TOL = 1e-12


def _freeze(*arrays):
    for a in arrays:
        a.flags.writeable = False


class CoarseTriangulation:
    """Conforming triangulation with edge connectivity.

    ``triangle_edges[t, j]`` is the edge from ``v_j`` to ``v_{j+1}`` of
    triangle ``t``; ``edge_triangles[e]`` lists the (one or two) incident
    triangles, padded with -1.
    """

    def __init__(self, vertices, triangles, N=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.N = N
        nv = len(self.vertices)
        local = np.array([[0, 1], [1, 2], [2, 0]])
        pairs = self.triangles[:, local].reshape(-1, 2)
        keys = np.sort(pairs, axis=1)
        uniq, inverse, counts = np.unique(
            keys[:, 0] * nv + keys[:, 1], return_inverse=True, return_counts=True
        )
        if np.any(counts > 2):
            raise InvalidParameter("non-manifold edge in triangulation")
        self.edges = np.column_stack([uniq // nv, uniq % nv])
        self.triangle_edges = inverse.reshape(-1, 3)
        self.edge_boundary = counts == 1
        et = -np.ones((len(uniq), 2), dtype=np.int64)
        fill = np.zeros(len(uniq), dtype=np.int64)
        for k, e in enumerate(inverse):
            et[e, fill[e]] = k // 3
            fill[e] += 1
        self.edge_triangles = et
        _freeze(self.vertices, self.triangles, self.edges, self.triangle_edges,
                self.edge_boundary, self.edge_triangles)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_unit_square_mesh(N):
    """Uniform N x N grid of squares, each cut along its bottom-left to
    top-right diagonal."""
    if int(N) != N or N < 1:
        raise InvalidParameter(f"N must be a positive integer, got {N!r}")
    N = int(N)
    x = np.linspace(0.0, 1.0, N + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="xy")
    v00 = (j * (N + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + N + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return CoarseTriangulation(vertices, triangles, N=N)


def _outward_normal(p, q):
    """Outward unit normal of the edge p -> q of a counter-clockwise triangle."""
    d = q - p
    length = np.hypot(d[..., 0], d[..., 1])
    n = np.stack([d[..., 1], -d[..., 0]], axis=-1) / length[..., None]
    return n, length


class StaggeredMesh:
    """The subdivided triangulation with the F_u / F_p edge sets."""

    def __init__(self, coarse):
        self.coarse = coarse
        nv, nt, ne = coarse.n_vertices, coarse.n_triangles, coarse.n_edges
        tri = coarse.triangles
        centroids = coarse.vertices[tri].mean(axis=1)
        self.points = np.vstack([coarse.vertices, centroids])
        self.centroid_ids = nv + np.arange(nt)

        nu = np.repeat(self.centroid_ids, 3)
        a = tri.ravel()
        b = tri[:, [1, 2, 0]].ravel()
        self.elements = np.column_stack([a, b, nu])
        self.macro_of = np.repeat(np.arange(nt), 3)

        t3 = 3 * np.arange(nt)[:, None]
        jj = np.arange(3)[None, :]
        fp_of_vertex = ne + t3 + jj  # F_p edge joining v_j to nu_t
        el_edges = np.empty((nt, 3, 3), dtype=np.int64)
        el_edges[:, :, 0] = ne + t3 + (jj + 1) % 3
        el_edges[:, :, 1] = fp_of_vertex
        el_edges[:, :, 2] = coarse.triangle_edges
        self.element_edges = el_edges.reshape(-1, 3)

        fp_nodes = np.column_stack([tri.ravel(), np.repeat(self.centroid_ids, 3)])
        self.edges = np.vstack([coarse.edges, fp_nodes])
        n_edges = len(self.edges)
        self.is_fp = np.zeros(n_edges, dtype=bool)
        self.is_fp[ne:] = True
        self.is_boundary = np.zeros(n_edges, dtype=bool)
        self.is_boundary[:ne] = coarse.edge_boundary

        # adjacency: (lower element, higher element or -1)
        owners = [[] for _ in range(n_edges)]
        for el, row in enumerate(self.element_edges):
            for e in row:
                owners[e].append(el)
        ee = -np.ones((n_edges, 2), dtype=np.int64)
        for e, lst in enumerate(owners):
            lst.sort()
            ee[e, : len(lst)] = lst
        self.edge_elements = ee

        # local outward normals of every element edge
        P = self.points[self.elements]
        start = P[:, [1, 2, 0]]
        end = P[:, [2, 0, 1]]
        n_loc, len_loc = _outward_normal(start, end)
        self.element_normals = n_loc
        # fixed edge normal: outward from the lower-indexed element
        self.normals = np.empty((n_edges, 2))
        self.h = np.empty(n_edges)
        lo = ee[:, 0]
        k_lo = np.argmax(self.element_edges[lo] == np.arange(n_edges)[:, None], axis=1)
        self.normals[:] = n_loc[lo, k_lo]
        self.h[:] = len_loc[lo, k_lo]
        self.edge_local_index = np.full((n_edges, 2), -1, dtype=np.int64)
        self.edge_local_index[:, 0] = k_lo
        hi = ee[:, 1]
        has_hi = hi >= 0
        self.edge_local_index[has_hi, 1] = np.argmax(
            self.element_edges[hi[has_hi]] == np.arange(n_edges)[has_hi, None], axis=1
        )
        signs = np.einsum("tkd,tkd->tk", n_loc, self.normals[self.element_edges])
        self.element_edge_sign = np.rint(signs).astype(np.int64)

        d1 = P[:, 1] - P[:, 0]
        d2 = P[:, 2] - P[:, 0]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        self.F_u = np.arange(ne)
        self.F_p = np.arange(ne, n_edges)
        self.F_u0 = np.flatnonzero(~coarse.edge_boundary)

        lo_xy = P.min(axis=1)
        hi_xy = P.max(axis=1)
        self._bbox = (lo_xy, hi_xy)
        self._domain_lo = self.points.min(axis=0)
        self._domain_hi = self.points.max(axis=0)
        self._build_grid()
        _freeze(self.points, self.elements, self.macro_of, self.element_edges,
                self.edges, self.is_fp, self.is_boundary, self.edge_elements,
                self.element_normals, self.normals, self.h, self.edge_local_index,
                self.element_edge_sign, self.areas)

    # ------------------------------------------------------------------
    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_macros(self):
        return self.coarse.n_triangles

    @property
    def n_edges(self):
        return len(self.edges)

    def macro(self, t):
        """Sub-triangle indices of the macro-element S(nu_t)."""
        return np.arange(3 * t, 3 * t + 3)

    def patch(self, e):
        """Sub-triangles sharing coarse edge ``e`` (the patch R(e))."""
        if self.is_fp[e]:
            raise InvalidParameter(f"edge {e} is not a coarse edge")
        row = self.edge_elements[e]
        return row[row >= 0]

    def vertex_coords(self, elements=None):
        idx = self.elements if elements is None else self.elements[elements]
        return self.points[idx]

    def min_angle(self):
        """Smallest interior angle (radians) over all sub-triangles."""
        P = self.points[self.elements]
        angles = []
        for k in range(3):
            u = P[:, (k + 1) % 3] - P[:, k]
            v = P[:, (k + 2) % 3] - P[:, k]
            c = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return float(np.min(angles))

    # ------------------------------------------------------------------
    # geometric queries
    def _build_grid(self):
        lo, hi = self._bbox
        g = max(1, int(np.sqrt(self.n_elements / 2.0)))
        self._grid_n = g
        span = np.maximum(self._domain_hi - self._domain_lo, 1e-300)
        self._grid_span = span
        pad = 1e-9 * span
        c0 = np.floor((lo - pad - self._domain_lo) / span * g).astype(int).clip(0, g - 1)
        c1 = np.floor((hi + pad - self._domain_lo) / span * g).astype(int).clip(0, g - 1)
        cells = [[] for _ in range(g * g)]
        for el in range(self.n_elements):
            for ix in range(c0[el, 0], c1[el, 0] + 1):
                for iy in range(c0[el, 1], c1[el, 1] + 1):
                    cells[iy * g + ix].append(el)
        self._cells = [np.array(c, dtype=np.int64) for c in cells]

    def _candidates(self, lo, hi):
        g = self._grid_n
        pad = 1e-9 * self._grid_span
        c0 = np.floor((lo - pad - self._domain_lo) / self._grid_span * g).astype(int).clip(0, g - 1)
        c1 = np.floor((hi + pad - self._domain_lo) / self._grid_span * g).astype(int).clip(0, g - 1)
        parts = [self._cells[iy * g + ix]
                 for ix in range(c0[0], c1[0] + 1) for iy in range(c0[1], c1[1] + 1)]
        return np.unique(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)

    def barycentric(self, elements, x):
        """Barycentric coordinates of point(s) ``x`` w.r.t. ``elements``."""
        P = self.points[self.elements[elements]]
        x = np.asarray(x, dtype=float)
        d1 = P[..., 1, :] - P[..., 0, :]
        d2 = P[..., 2, :] - P[..., 0, :]
        r = x - P[..., 0, :]
        det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        l1 = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / det
        l2 = (d1[..., 0] * r[..., 1] - d1[..., 1] * r[..., 0]) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)

    def in_domain(self, x, tol=CONTAINS_TOL):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self._domain_lo - tol) and np.all(x <= self._domain_hi + tol))

    def locate_point(self, x, accelerate=True):
        """Index of an element whose closure contains ``x``.

        Ties (points on shared edges or vertices) resolve to the smallest
        qualifying element index.
        """
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)) or not self.in_domain(x):
            raise PointOutsideDomain(f"point {tuple(x)} is outside the domain")
        cand = self._candidates(x, x) if accelerate else np.arange(self.n_elements)
        lam = self.barycentric(cand, x)
        hit = cand[np.all(lam >= -CONTAINS_TOL, axis=1)]
        if len(hit) == 0:
            raise PointOutsideDomain(f"point {tuple(x)} is not covered by the mesh")
        return int(hit.min())

    def locate_points(self, xs):
        """Vectorised :meth:`locate_point`; returns (elements, barycentrics)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        out = np.empty(len(xs), dtype=np.int64)
        for i, x in enumerate(xs):
            out[i] = self.locate_point(x)
        return out, self.barycentric(out, xs)

    def trace_segment(self, p, q):
        """Elements met by the closed segment p-q, ordered along the segment.

        Returns a list of ``(element, crossed_edges)`` where ``crossed_edges``
        are the element's edges that intersect the open segment.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        for z in (p, q):
            if not np.all(np.isfinite(z)) or not self.in_domain(z):
                raise PointOutsideDomain(f"point {tuple(z)} is outside the domain")
        d = q - p
        if not np.any(d):
            return [(self.locate_point(p), [])]
        cand = self._candidates(np.minimum(p, q), np.maximum(p, q))
        t_in, t_out = self._clip(cand, p, d)
        ok = t_in <= t_out + 1e-12
        cand, t_in = cand[ok], t_in[ok]
        order = np.lexsort((cand, t_in))
        result = []
        for el in cand[order]:
            crossed = [int(e) for e in self.element_edges[el]
                       if _segments_intersect_open(p, q, *self.points[self.edges[e]])]
            result.append((int(el), crossed))
        return result

    def _clip(self, elements, p, d):
        """Cyrus-Beck clipping of p + t d, t in [0, 1], against elements."""
        P = self.points[self.elements[elements]]
        n = self.element_normals[elements]  # outward, per local edge k
        start = P[:, [1, 2, 0]]
        scale = np.sqrt(self.areas[elements])[:, None]
        # inside: n . (x - start) <= 0
        num = np.einsum("ekd,ekd->ek", n, p[None, None, :] - start)
        den = np.einsum("ekd,d->ek", n, d)
        tol = CONTAINS_TOL * scale
        t_in = np.zeros(len(elements))
        t_out = np.ones(len(elements))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (tol - num) / den
        entering = den < 0
        leaving = den > 0
        parallel = ~(entering | leaving)
        t_in = np.maximum(t_in, np.where(entering, t, -np.inf).max(axis=1))
        t_out = np.minimum(t_out, np.where(leaving, t, np.inf).min(axis=1))
        outside = np.any(parallel & (num > tol), axis=1)
        t_in[outside] = np.inf
        return t_in, t_out

    def write(self, path):
        """Plain-text dump: one record per line, tagged by its first token."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# sdg-ibm staggered mesh\n")
            fh.write("# P <id> <x> <y>\n# T <id> <p0> <p1> <p2> <macro>\n")
            fh.write("# E <id> <p0> <p1> <set:Fu|Fp> <boundary:0|1> <nx> <ny> <h>\n")
            for i, (x, y) in enumerate(self.points):
                fh.write(f"P {i} {x:.17g} {y:.17g}\n")
            for i, (a, b, c) in enumerate(self.elements):
                fh.write(f"T {i} {a} {b} {c} {self.macro_of[i]}\n")
            for e, (a, b) in enumerate(self.edges):
                kind = "Fp" if self.is_fp[e] else "Fu"
                nx, ny = self.normals[e]
                fh.write(f"E {e} {a} {b} {kind} {int(self.is_boundary[e])} "
                         f"{nx:.17g} {ny:.17g} {self.h[e]:.17g}\n")


def _segments_intersect_open(p, q, a, b, tol=1e-14):
    """True when segment a-b meets the open segment p-q."""
    d = q - p
    f = b - a
    den = d[0] * f[1] - d[1] * f[0]
    r = a - p
    scale = max(np.hypot(*d), 1e-300) * max(np.hypot(*f), 1e-300)
    if abs(den) <= tol * scale:
        # parallel: overlapping collinear pieces count as crossing
        if abs(r[0] * d[1] - r[1] * d[0]) > tol * scale:
            return False
        dd = d @ d
        ta, tb = (a - p) @ d / dd, (b - p) @ d / dd
        lo, hi = min(ta, tb), max(ta, tb)
        return hi > tol and lo < 1.0 - tol
    t = (r[0] * f[1] - r[1] * f[0]) / den
    s = (r[0] * d[1] - r[1] * d[0]) / den
    return tol < t < 1.0 - tol and -tol <= s <= 1.0 + tol


def staggered_subdivide(coarse):
    return StaggeredMesh(coarse)


def build_mesh(N):
    """Convenience: unit-square staggered mesh with N divisions per side."""
    return StaggeredMesh(build_unit_square_mesh(N))

"""Immersed elastic curve: Lagrangian markers, force functional, marker update."""
import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidGeometry, InvalidParameter, MarkerEscaped, PointOutsideDomain

CURVE_KINDS = ("ellipse-static", "l-shape", "ellipse-rotating", "stretched-circle", "balloon")

# closed L-shaped polygon, counter-clockwise, traversed uniformly in arclength
L_SHAPE_VERTICES = np.array([
    [0.15, 0.15], [0.45, 0.15], [0.45, 0.30], [0.30, 0.30], [0.30, 0.45], [0.15, 0.45],
])


@dataclass(frozen=True)
class ImmersedBoundary:
    """Closed curve sampled at ``m`` markers.

    ``s`` holds the partition s_0 < ... < s_m of the parameter interval and
    ``X[i] = X(s_i)`` for i < m; the closing marker X(s_m) equals X[0].
    """

    s: np.ndarray
    X: np.ndarray
    kappa: float

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2 or len(X) < 3:
            raise InvalidParameter("need at least three markers of dimension two")
        if s.shape != (len(X) + 1,) or np.any(np.diff(s) <= 0):
            raise InvalidParameter("parameter partition must be increasing with m + 1 entries")
        if self.kappa < 0:
            raise InvalidParameter(f"elasticity constant must be nonnegative, got {self.kappa}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "X", X)

    @property
    def m(self):
        return len(self.X)

    @property
    def length(self):
        """Length of the parameter interval."""
        return float(self.s[-1] - self.s[0])

    @property
    def ds(self):
        """s_{i+1} - s_i for i = 0..m-1."""
        return np.diff(self.s)

    def segments(self):
        """X_{i+1} - X_i for i = 0..m-1 (periodic)."""
        return np.roll(self.X, -1, axis=0) - self.X

    def derivatives(self):
        """Piecewise-constant dX/ds on [s_i, s_{i+1}], i = 0..m-1."""
        return self.segments() / self.ds[:, None]

    def marker_forces(self):
        """kappa (X'_{i+1/2} - X'_{i-1/2}) at every marker."""
        d = self.derivatives()
        return self.kappa * (d - np.roll(d, 1, axis=0))

    def with_positions(self, X):
        return ImmersedBoundary(self.s, X, self.kappa)

    def inside(self):
        """True when every marker lies strictly inside the unit square."""
        return bool(np.all(np.isfinite(self.X)) and np.all(self.X > 0.0) and np.all(self.X < 1.0))


def _sigmoid_rescaled(s):
    G = lambda t: 1.0 / (1.0 + np.exp(-10.0 + 20.0 * t))
    return (G(s) - G(0.0)) / (G(1.0) - G(0.0))


def _polygon_arclength(vertices, t):
    """Points at arclength fractions ``t`` in [0, 1) along a closed polygon."""
    seg = np.roll(vertices, -1, axis=0) - vertices
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    a = t * cum[-1]
    k = np.clip(np.searchsorted(cum, a, side="right") - 1, 0, len(vertices) - 1)
    frac = (a - cum[k]) / lengths[k]
    return vertices[k] + frac[:, None] * seg[k]


def init_curve(kind, m, kappa=1.0, params=None):
    """Markers of one of the named test curves at uniform parameter values."""
    params = dict(params or {})
    if int(m) != m or m < 3:
        raise InvalidParameter(f"need m >= 3 markers, got {m}")
    m = int(m)
    if kind == "balloon":
        R = float(params.get("R", 0.4))
        s = np.linspace(0.0, 2.0 * np.pi * R, m + 1)
        t = s[:-1]
        X = np.column_stack([R * np.cos(t / R) + 0.5, R * np.sin(t / R) + 0.5])
    else:
        s = np.linspace(0.0, 1.0, m + 1)
        t = s[:-1]
        if kind == "ellipse-static":
            X = np.column_stack([0.2 * np.cos(2 * np.pi * t) + 0.3, 0.1 * np.sin(2 * np.pi * t) + 0.3])
        elif kind == "ellipse-rotating":
            X = np.column_stack([0.2 * np.cos(2 * np.pi * t) + 0.4, 0.1 * np.sin(2 * np.pi * t) + 0.5])
        elif kind == "stretched-circle":
            g = _sigmoid_rescaled(t)
            X = np.column_stack([0.2 * np.cos(2 * np.pi * g) + 0.5, 0.2 * np.sin(2 * np.pi * g) + 0.5])
        elif kind == "l-shape":
            X = _polygon_arclength(L_SHAPE_VERTICES, t)
        else:
            raise InvalidParameter(f"unknown curve kind {kind!r}; expected one of {CURVE_KINDS}")
    ib = ImmersedBoundary(s, X, kappa)
    if not ib.inside():
        raise InvalidGeometry(f"curve {kind!r} has markers outside the domain")
    return ib


# ----------------------------------------------------------------------
# force functional

def point_evaluation_matrix(U, X):
    """Sparse (len(X), U.dim) matrix of velocity basis values at the points."""
    mesh = U.mesh
    try:
        el, lam = mesh.locate_points(X)
    except PointOutsideDomain as exc:
        raise MarkerEscaped(str(exc)) from exc
    n = len(X)
    rows = np.repeat(np.arange(n), 3)
    cols = (3 * el[:, None] + np.arange(3)[None, :]).ravel()
    Lam = sp.csr_matrix((lam.ravel(), (rows, cols)), shape=(n, 3 * mesh.n_elements))
    return (Lam @ U.T).tocsr()


@dataclass
class ForceFunctional:
    """Load vector [F1 | F2] of the curve force and the per-marker forces."""

    coeffs: np.ndarray
    marker_forces: np.ndarray

    @property
    def total_force(self):
        return self.marker_forces.sum(axis=0)


def assemble_force(ib, U):
    """(F_h, v) = sum_i kappa (X'_{i+1/2} - X'_{i-1/2}) . v(X_i)."""
    if not ib.inside():
        raise MarkerEscaped("a marker left the domain")
    f = ib.marker_forces()
    E = point_evaluation_matrix(U, ib.X)
    return ForceFunctional(np.concatenate([E.T @ f[:, 0], E.T @ f[:, 1]]), f)


def advance_markers(ib, V, dt):
    """X^n = X^{n-1} + dt u*(X^{n-1})."""
    if not ib.inside():
        raise MarkerEscaped("a marker left the domain")
    try:
        vel = V.evaluate_points(ib.X)
    except PointOutsideDomain as exc:
        raise MarkerEscaped(str(exc)) from exc
    new = ib.with_positions(ib.X + dt * vel)
    if not new.inside():
        raise MarkerEscaped("a marker left the domain during the update")
    return new


def write_markers(ib, path):
    """CSV snapshot with columns i, s, x, y."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "s", "x", "y"])
        for i in range(ib.m):
            w.writerow([i, "%.17g" % ib.s[i], "%.17g" % ib.X[i, 0], "%.17g" % ib.X[i, 1]])

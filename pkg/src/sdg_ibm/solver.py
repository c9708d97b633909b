"""Linearized saddle-point solves and the Picard loop of one time step."""
import warnings
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .errors import InvalidParameter, PicardNotConverged, SingularSystem, SolveDiverged
from .postprocess import PostprocessedVelocity, postprocess
from .quadrature import DEFAULT_RULE

RESIDUAL_TOL = 1e-9
ENERGY_TOL = 1e-10


@dataclass(frozen=True)
class PicardSettings:
    tol: float = 1e-8
    max_iters: int = 25
    eps_floor: float = 1e-300

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidParameter(f"Picard tolerance must be positive, got {self.tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidParameter(f"max_iters must be a positive integer, got {self.max_iters}")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise InvalidParameter(f"step count must be a positive integer, got {self.K}")
        if not self.T > 0:
            raise InvalidParameter(f"final time must be positive, got {self.T}")

    @property
    def dt(self):
        return self.T / self.K

    def times(self):
        return self.dt * np.arange(self.K + 1)

    @classmethod
    def from_step(cls, T, dt, rtol=1e-9):
        """Grid with step ``dt``; fails unless ``T / dt`` is an integer."""
        K = round(T / dt)
        if K < 1 or abs(K * dt - T) > rtol * T:
            raise InvalidParameter(f"dt = {dt} does not divide T = {T}")
        return cls(T, K)


@dataclass
class FieldState:
    """Velocity pair, pressure, eliminated unknowns and the postprocessed velocity."""

    u1: np.ndarray
    u2: np.ndarray
    p: np.ndarray
    aux: object = None
    V: PostprocessedVelocity = None

    @property
    def u(self):
        return np.concatenate([self.u1, self.u2])

    def is_finite(self):
        return bool(np.all(np.isfinite(self.u1)) and np.all(np.isfinite(self.u2))
                    and np.all(np.isfinite(self.p)))

    @classmethod
    def zero(cls, core):
        n = core.U.dim
        return cls(np.zeros(n), np.zeros(n), np.zeros(core.P.dim),
                   assembly.Auxiliaries(*(np.zeros(core.W.dim) for _ in range(6))),
                   PostprocessedVelocity.zero(core.mesh))


@dataclass
class LinearizedProblem:
    """alpha u - mu Lap u + rho/2 (V.grad u + div(u V)) + grad p = F, div u = 0.

    ``rhs`` is the load vector of F on the velocity pair, ordered [F1 | F2].
    """

    alpha: float
    mu: float
    rho: float
    V: PostprocessedVelocity
    rhs: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "mu", "rho"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive, got {getattr(self, name)}")
        self.rhs = np.asarray(self.rhs, dtype=float)


# ----------------------------------------------------------------------
# load vectors and norms

def load_vector(core, f, rule=DEFAULT_RULE):
    """[F1 | F2] with F_c[i] = int f_c v_i for a vector function ``f(x) -> (n, 2)``."""
    x, w = core.quad_x, core.quad_w
    if rule is not DEFAULT_RULE:
        x, w = assembly.element_quadrature(core.mesh, rule)
    vals = np.asarray(f(x.reshape(-1, 2)), dtype=float).reshape(x.shape[0], x.shape[1], 2)
    lam = (rule if rule is not DEFAULT_RULE else DEFAULT_RULE).barycentric
    loc = np.einsum("eq,qk,eqc->cek", w, lam, vals)
    return np.concatenate([core.U.T.T @ loc[c].ravel() for c in range(2)])


def mass_apply(core, u):
    n = core.U.dim
    return np.concatenate([core.Mt @ u[:n], core.Mt @ u[n:]])


def l2_norm(core, u):
    return float(np.sqrt(max(u @ mass_apply(core, u), 0.0)))


def gradient_norm_sq(core, aux):
    """||L_h||^2 from the recovered gradient rows."""
    return float(aux.w_hat @ (core.M @ aux.w_hat) + aux.z_hat @ (core.M @ aux.z_hat))


def energy_identity_error(core, problem, state):
    """Relative defect of alpha ||u||^2 + mu ||L_h||^2 = (F, u)."""
    u = state.u
    lhs = problem.alpha * (u @ mass_apply(core, u)) + problem.mu * gradient_norm_sq(core, state.aux)
    rhs = float(problem.rhs @ u)
    return abs(lhs - rhs) / max(abs(rhs), np.finfo(float).tiny)


# ----------------------------------------------------------------------
# one linearized solve

class SparseLU:
    """SuperLU factorization (COLAMD column ordering, threshold pivoting)."""

    def __init__(self, S):
        try:
            self._lu = spla.splu(sp.csc_matrix(S), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularSystem(f"sparse factorization failed: {exc}") from exc

    def solve(self, b):
        return self._lu.solve(np.asarray(b, dtype=float))


class _Condensation:
    """Index sets for macro-local static condensation of the saddle system.

    Interior unknowns of macro t: the centroid-node velocity dofs of its three
    sub-triangles (both components) and its three vertex pressure dofs. They
    couple only to unknowns supported in t, so they are eliminated with dense
    9 x 9 solves; the centroid pressure dof of every macro stays global.
    """

    def __init__(self, core):
        mesh, U = core.mesh, core.U
        nU, nt = U.dim, mesh.n_macros
        T = U.T.tocsr()
        nu_dof = T.indices[T.indptr[2::3]]  # centroid dof of each element
        nu = nu_dof.reshape(nt, 3)
        p = 2 * nU + 4 * np.arange(nt)[:, None] + np.arange(3)[None, :]
        self.interior = np.concatenate([nu, nu + nU, p], axis=1)  # (nt, 9)
        mask = np.ones(2 * nU + core.P.dim, dtype=bool)
        mask[self.interior.ravel()] = False
        mask[2 * nU + 3] = False  # pin the centroid pressure of macro 0
        self.interface = np.flatnonzero(mask)
        self.n = 2 * nU + core.P.dim


_CONDENSATIONS = weakref.WeakKeyDictionary()


def _condensation(core):
    hit = _CONDENSATIONS.get(core.mesh)
    if hit is None or hit.n != 2 * core.U.dim + core.P.dim:
        hit = _CONDENSATIONS[core.mesh] = _Condensation(core)
    return hit


def full_saddle_matrix(core, A):
    """[[A (+) A, C^T], [C, 0]] without any pressure normalisation."""
    return sp.bmat([[sp.block_diag([A, A]), core.C.T], [core.C, None]], format="csr")


def _solve_condensed(core, K, b):
    cd = _condensation(core)
    I, E = cd.interior, cd.interface
    nt = I.shape[0]
    If = I.ravel()
    Kii = K[If][:, If].tocoo()
    if np.any(Kii.row // 9 != Kii.col // 9):
        raise SingularSystem("interior unknowns are not macro-local")
    blocks = np.zeros((nt, 9, 9))
    blocks[Kii.row // 9, Kii.row % 9, Kii.col % 9] = Kii.data
    try:
        inv = np.linalg.inv(blocks)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"singular macro-interior block: {exc}") from exc
    Kinv = assembly._blockdiag(inv)
    Kei = K[E][:, If].tocsr()
    Kie = K[If][:, E].tocsr()
    S = (K[E][:, E] - Kei @ (Kinv @ Kie)).tocsc()
    bI = b[If]
    g = b[E] - Kei @ (Kinv @ bI)
    xE = SparseLU(S).solve(g)
    xI = Kinv @ (bI - Kie @ xE)
    x = np.zeros(cd.n)
    x[E] = xE
    x[If] = xI
    return x


def solve_saddle(core, A, rhs, check=True, condense=True):
    """Velocity pair and zero-mean pressure solving the saddle system.

    One pressure unknown is pinned to zero and the result shifted to zero
    mean; with ``condense`` the macro-interior unknowns are eliminated first.
    """
    n = 2 * core.U.dim
    K = full_saddle_matrix(core, A)
    b = np.zeros(K.shape[0])
    b[:n] = rhs
    if not (np.all(np.isfinite(K.data)) and np.all(np.isfinite(b))):
        raise SolveDiverged("non-finite entries in the saddle-point system")
    if condense:
        x = _solve_condensed(core, K, b)
    else:
        keep = np.r_[0:n, n + 1:K.shape[0]]
        S = K[keep][:, keep].tocsc()
        x = np.zeros(K.shape[0])
        x[keep] = SparseLU(S).solve(b[keep])
    if not np.all(np.isfinite(x)):
        raise SolveDiverged("non-finite saddle-point solution")
    if check:
        res = np.linalg.norm(K @ x - b)
        scale = np.linalg.norm(b) + abs(K).max() * np.linalg.norm(x)
        if res > RESIDUAL_TOL * max(scale, np.finfo(float).tiny):
            raise SolveDiverged(f"saddle-point residual {res:.3e} above tolerance")
    p = x[n:].copy()
    mean = core.pressure_mean
    p -= (mean @ p) / mean.sum()
    return x[:n], p


def solve_linearized(problem, core, rule=DEFAULT_RULE, check=True):
    """Solve the saddle system of ``problem``; returns a FieldState with
    recovered auxiliaries and the postprocessed velocity."""
    n = core.U.dim
    if problem.rhs.shape != (2 * n,):
        raise InvalidParameter(f"rhs must have length {2 * n}")
    R = None if problem.V is None else assembly.assemble_convection(core, problem.V, rule)
    mom = assembly.build_momentum(core, R, problem.alpha, problem.mu, problem.rho)
    u, p = solve_saddle(core, mom.A, problem.rhs, check)
    u1, u2 = u[:n], u[n:]
    aux = assembly.recover_auxiliaries(core, R, u1, u2, problem.mu, problem.rho)
    V = postprocess(core, u1, u2, aux)
    return FieldState(u1, u2, p, aux, V)


# ----------------------------------------------------------------------
# Picard loop

@dataclass
class PicardResult:
    state: FieldState
    iters: int
    converged: bool
    blown_up: bool = False
    differences: list = field(default_factory=list)
    energy_errors: list = field(default_factory=list)


def picard_solve(core, u_prev, source, settings, dt, rho, mu, rule=DEFAULT_RULE):
    """One implicit time step by Picard iteration on the convection field.

    ``u_prev`` is the FieldState of the previous time level (its ``V`` is
    the postprocessed velocity used for the first iterate); ``source`` is
    the load vector of the body force, fixed over the iterations.
    """
    alpha = rho / dt
    rhs = alpha * mass_apply(core, u_prev.u) + np.asarray(source, dtype=float)
    prev = u_prev
    result = PicardResult(u_prev, 0, False)
    for m in range(1, settings.max_iters + 1):
        problem = LinearizedProblem(alpha, mu, rho, prev.V, rhs)
        try:
            state = solve_linearized(problem, core, rule)
        except (SolveDiverged, SingularSystem):
            result.blown_up = True
            result.iters = m
            return result
        if not (state.is_finite() and np.all(np.isfinite(state.V.coeffs))):
            result.blown_up = True
            result.iters = m
            return result
        result.energy_errors.append(energy_identity_error(core, problem, state))
        d = state.u - prev.u
        diff = l2_norm(core, d) / max(l2_norm(core, state.u), settings.eps_floor)
        result.differences.append(diff)
        result.state, result.iters = state, m
        if diff <= settings.tol:
            result.converged = True
            return result
        prev = state
    warnings.warn(f"Picard iteration stopped after {settings.max_iters} iterations "
                  f"(last relative difference {result.differences[-1]:.3e})", PicardNotConverged)
    return result

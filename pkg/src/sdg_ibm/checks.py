"""Quick self-checks of the discrete operators on small meshes."""
import numpy as np

from . import assembly
from .diagnostics import polygon_area
from .ib import assemble_force, init_curve
from .mesh import build_mesh
from .postprocess import PostprocessedVelocity
from .solver import (LinearizedProblem, energy_identity_error, load_vector,
                     solve_linearized)
from .spaces import build_layouts


def _field(x):
    return np.column_stack([np.sin(3.0 * x[:, 1]) + x[:, 0], np.cos(2.0 * x[:, 0]) * x[:, 1]])


def run_checks(N=4):
    """List of (name, passed, value) for the core invariants."""
    mesh = build_mesh(N)
    core = assembly.assemble_core(mesh, build_layouts(mesh))
    Bs, Cs = assembly.assemble_core_adjoint(mesh, (core.U, core.W, core.P))
    V = PostprocessedVelocity.interpolate(mesh, _field)
    R = assembly.assemble_convection(core, V)
    Rs = assembly.assemble_convection_adjoint(core, V)
    mom = assembly.build_momentum(core, R, 1.0, 1.0, 1.0)
    out = []

    def add(name, value, tol):
        out.append((name, bool(value <= tol), float(value)))

    add("B adjoint", abs(core.B - Bs.T).max(), 1e-12)
    add("b adjoint", abs(core.C - Cs.T).max(), 1e-12)
    add("R adjoint", abs(R - Rs.T).max(), 1e-12)
    add("convection skew", abs(mom.convection + mom.convection.T).max(), 1e-12)
    rhs = load_vector(core, _field)
    problem = LinearizedProblem(10.0, 1.0, 1.0, V, rhs)
    state = solve_linearized(problem, core)
    scale = max(np.abs(state.u).max(), 1e-300)
    add("weak divergence", np.abs(core.C @ state.u).max() / scale, 1e-9)
    add("postprocessed divergence", state.V.max_divergence() / max(state.V.max_abs(), 1e-300), 1e-10)
    add("energy identity", energy_identity_error(core, problem, state), 1e-10)
    ib = init_curve("ellipse-static", 64)
    add("total force", np.abs(assemble_force(ib, core.U).total_force).max(), 1e-12)
    exact = 0.5 * 64 * 0.2 * 0.1 * np.sin(2 * np.pi / 64)
    add("polygon area", abs(polygon_area(ib) - exact), 1e-14)
    return out

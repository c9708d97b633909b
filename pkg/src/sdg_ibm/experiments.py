"""Time-stepping driver for the immersed-boundary experiments."""
import csv
import itertools
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .assembly import assemble_core
from .diagnostics import (DiagnosticsRecord, area_change_pct, broken_seminorm, cfl_eta,
                          curve_energy, polygon_area)
from .errors import MarkerEscaped, PicardNotConverged
from .ib import advance_markers, assemble_force, init_curve, write_markers
from .mesh import build_mesh
from .postprocess import postprocess
from .solver import FieldState, PicardSettings, l2_norm, load_vector, picard_solve, solve_saddle
from .spaces import build_layouts
from . import assembly

COMPLETED = "completed"
BLOWN_UP = "blown_up"
MARKER_ESCAPED = "marker_escaped"
PICARD_WARNINGS = "picard_warnings"

TWO_PI = 2.0 * np.pi


def rotating_velocity(x):
    """Divergence-free rotating field vanishing on the boundary of the unit square."""
    x = np.atleast_2d(x)
    X, Y = TWO_PI * x[:, 0], TWO_PI * x[:, 1]
    return np.column_stack([-0.4 * (1.0 - np.cos(X)) * np.sin(Y),
                            0.4 * np.sin(X) * (1.0 - np.cos(Y))])


def rotating_body_force(x, rho, mu):
    """rho (v . grad) v - mu Lap v for the rotating field v."""
    x = np.atleast_2d(x)
    X, Y = TWO_PI * x[:, 0], TWO_PI * x[:, 1]
    v = rotating_velocity(x)
    a = 0.4 * TWO_PI
    g11 = -a * np.sin(X) * np.sin(Y)
    g12 = -a * (1.0 - np.cos(X)) * np.cos(Y)
    g21 = a * np.cos(X) * (1.0 - np.cos(Y))
    g22 = a * np.sin(X) * np.sin(Y)
    lap1 = -a * TWO_PI * np.sin(Y) * (2.0 * np.cos(X) - 1.0)
    lap2 = a * TWO_PI * np.sin(X) * (2.0 * np.cos(Y) - 1.0)
    conv1 = v[:, 0] * g11 + v[:, 1] * g12
    conv2 = v[:, 0] * g21 + v[:, 1] * g22
    return np.column_stack([rho * conv1 - mu * lap1, rho * conv2 - mu * lap2])


def divergence_free_projection(core, f):
    """Velocity pair u with C u = 0 minimising ||u - f|| in L^2."""
    n = core.U.dim
    u, _ = solve_saddle(core, core.Mt, load_vector(core, f))
    u1, u2 = u[:n], u[n:]
    aux = assembly.recover_auxiliaries(core, None, u1, u2, 1.0, 1.0)
    return FieldState(u1, u2, np.zeros(core.P.dim), aux, postprocess(core, u1, u2, aux))


@dataclass
class RunRecord:
    config: object
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    status: str = COMPLETED
    picard_warnings: int = 0
    max_energy_identity_error: float = 0.0
    max_divergence_residual: float = 0.0
    max_total_force: float = 0.0
    max_postprocessed_divergence: float = 0.0
    max_marker_displacement: float = 0.0
    message: str = ""

    @property
    def final(self):
        return self.records[-1]

    @property
    def energies(self):
        return np.array([r.E for r in self.records])

    @property
    def area_changes(self):
        return np.array([r.area_change_pct for r in self.records])


def _setup(config):
    mesh = build_mesh(config.N)
    core = assemble_core(mesh, build_layouts(mesh))
    ib = init_curve(config.experiment, config.m, config.kappa, {"R": config.R})
    return mesh, core, ib


def run_experiment(config, progress=None, check_invariants=True):
    """Run the fully discrete scheme for ``config``; writes outputs if
    ``config.output`` is set."""
    config.validate()
    mesh, core, ib = _setup(config)
    dt, rho, mu = config.dt, config.rho, config.mu
    settings = PicardSettings(config.picard_tol, config.picard_max_iters)
    body = np.zeros(2 * core.U.dim)
    if config.experiment == "ellipse-rotating":
        state = divergence_free_projection(core, rotating_velocity)
        body = load_vector(core, lambda x: rotating_body_force(x, rho, mu))
    else:
        state = FieldState.zero(core)
    rec = RunRecord(config)
    area0 = polygon_area(ib)
    seminorm_sq = 0.0
    eta, h_s, h_x, L = cfl_eta(ib, mesh, dt, config.kappa)
    E0 = 0.5 * rho * l2_norm(core, state.u) ** 2 + curve_energy(ib)
    rec.records.append(DiagnosticsRecord(0, 0.0, area0, 0.0, E0, eta, 0, h_s, h_x, L))
    rec.snapshots[0] = ib.X.copy()
    for n in range(1, config.K + 1):
        t = n * dt
        try:
            force = assemble_force(ib, core.U)
        except MarkerEscaped as exc:
            rec.status, rec.message = MARKER_ESCAPED, str(exc)
            break
        if check_invariants:
            rec.max_total_force = max(rec.max_total_force, float(np.abs(force.total_force).max()))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PicardNotConverged)
            result = picard_solve(core, state, force.coeffs + body, settings, dt, rho, mu)
        if result.blown_up:
            last = rec.records[-1]
            rec.records.append(DiagnosticsRecord(n, t, last.area, last.area_change_pct, np.inf, last.eta,
                                                 result.iters, last.h_s, last.h_x, last.L, True))
            rec.status, rec.message = BLOWN_UP, f"non-finite solution at step {n}"
            break
        if not result.converged:
            rec.picard_warnings += 1
        state = result.state
        if result.energy_errors:
            rec.max_energy_identity_error = max(rec.max_energy_identity_error, max(result.energy_errors))
        if check_invariants:
            scale = max(float(np.abs(state.u).max()), np.finfo(float).tiny)
            rec.max_divergence_residual = max(rec.max_divergence_residual,
                                              float(np.abs(core.C @ state.u).max()) / scale)
            rec.max_postprocessed_divergence = max(rec.max_postprocessed_divergence,
                                                   state.V.max_divergence() / max(state.V.max_abs(), 1e-300))
        seminorm_sq += broken_seminorm(core, state.u1, state.u2) ** 2
        try:
            moved = advance_markers(ib, state.V, dt)
        except MarkerEscaped as exc:
            rec.status, rec.message = MARKER_ESCAPED, str(exc)
            break
        step = np.hypot(*(moved.X - ib.X).T).max()
        rec.max_marker_displacement = max(rec.max_marker_displacement, float(step))
        ib = moved
        area = polygon_area(ib)
        E = 0.5 * rho * l2_norm(core, state.u) ** 2 + dt * mu * seminorm_sq + curve_energy(ib)
        if not np.isfinite(E):
            rec.status = BLOWN_UP
        eta, h_s, h_x, L = cfl_eta(ib, mesh, dt, config.kappa)
        rec.records.append(DiagnosticsRecord(n, t, area, area_change_pct(area, area0), E, eta,
                                             result.iters, h_s, h_x, L, rec.status == BLOWN_UP))
        if n % config.snapshot_stride == 0 or n == config.K:
            rec.snapshots[n] = ib.X.copy()
        if progress is not None:
            progress(rec.records[-1])
        if rec.status == BLOWN_UP:
            break
    if rec.status == COMPLETED and rec.picard_warnings:
        rec.status = PICARD_WARNINGS
    if config.output:
        write_run(rec, ib.s, config.output)
    return rec


# ----------------------------------------------------------------------
# output

def write_run(rec, s, directory):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "area_history.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DiagnosticsRecord.CSV_COLUMNS)
        for r in rec.records:
            w.writerow(r.csv_row())
    from .ib import ImmersedBoundary

    for step, X in rec.snapshots.items():
        write_markers(ImmersedBoundary(s, X, rec.config.kappa), os.path.join(directory, f"markers_{step}.csv"))
    with open(os.path.join(directory, "run.meta"), "w") as fh:
        fh.write(rec.config.to_text())
        fh.write(f"version = {__version__}\n")
        fh.write("K0 = mu\n")
        fh.write(f"status = {rec.status}\n")
        fh.write(f"picard_warnings = {rec.picard_warnings}\n")


SUMMARY_COLUMNS = ("experiment", "N", "m", "K", "dt", "T", "kappa", "status", "steps",
                   "final_area_change_pct", "E0", "max_E", "max_eta", "max_picard_iters")


def summary_row(rec):
    c = rec.config
    E = rec.energies
    finite = E[np.isfinite(E)]
    return [c.experiment, c.N, c.m, c.K, "%.17g" % c.dt, "%.17g" % c.T, "%.17g" % c.kappa, rec.status,
            rec.final.step, "%.17g" % rec.final.area_change_pct, "%.17g" % E[0],
            "%.17g" % (finite.max() if len(finite) == len(E) else np.inf),
            "%.17g" % max(r.eta for r in rec.records), max(r.picard_iters for r in rec.records)]


def sweep(base, axes, directory=None, runner=run_experiment):
    """Run the cartesian product of ``axes`` (name -> list of values).

    Each point builds its config from ``base`` (a dict of raw values) and
    the axis values; ``dt`` and ``K`` axes are resolved against ``T``.
    """
    from .config import build_config

    names = list(axes)
    base = dict(base)
    if "dt" in axes:
        base.pop("K", None)
    if "K" in axes:
        base.pop("dt", None)
    records = []
    for point in itertools.product(*(axes[k] for k in names)):
        values = dict(base)
        values.update(zip(names, point))
        tag = "_".join(f"{k}{v}" for k, v in zip(names, point))
        if directory:
            values["output"] = os.path.join(directory, tag)
        records.append(runner(build_config(values)))
    if directory:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "summary.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_COLUMNS)
            for r in records:
                w.writerow(summary_row(r))
    return records

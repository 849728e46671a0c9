"""Fixed-stress staggered driver on two grids.

Each time step iterates

    flow solve (volumetric stress lagged) -> pressure to mechanics grid
    -> mechanics solve -> strain and stress back to flow grid

until the volume-weighted pressure increment drops below the tolerance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NotConverged, ValidationError
from .flow import FlowBcSpec, FlowState, assemble_flow_step, solve_flow_step
from .geometry import DEFAULT_TOL, apply_projection, two_grid_operators
from .mechanics import (
    ConstrainedSystem,
    MechBcSpec,
    MechState,
    assemble_body_force,
    assemble_pressure_load,
    assemble_stiffness,
    assemble_traction,
    element_strain_stress,
    shape_gradients,
)
from .mesh import build_fv_grid

logger = logging.getLogger(__name__)


@dataclass
class CouplingConfig:
    """Time stepping and fixed-stress controls.

    ``dt`` is a constant step or an explicit schedule (sequence of steps);
    with a constant step ``n_steps`` sets the count.
    """

    dt: object = 1.0
    n_steps: int = None
    fs_tol: float = 1e-6
    fs_maxiter: int = 50
    p_scale: float = 1.0
    continue_on_failure: bool = False

    def __post_init__(self):
        if not self.fs_tol > 0:
            raise ValidationError("fs_tol", "must be positive")
        if self.fs_maxiter < 1:
            raise ValidationError("fs_maxiter", "must be >= 1")
        steps = self.schedule()
        if np.any(steps <= 0):
            raise ValidationError("dt", "time steps must be positive")

    def schedule(self):
        if np.ndim(self.dt) == 0:
            n = 1 if self.n_steps is None else int(self.n_steps)
            return np.full(n, float(self.dt))
        steps = np.asarray(self.dt, dtype=float)
        if self.n_steps is not None:
            steps = steps[: int(self.n_steps)]
        return steps


def geometric_schedule(dt_first, dt_last, n_steps):
    """n_steps time steps growing geometrically from dt_first to dt_last."""
    if n_steps == 1:
        return np.array([float(dt_first)])
    return dt_first * (dt_last / dt_first) ** (np.arange(n_steps) / (n_steps - 1))


@dataclass
class CoupledState:
    time: float
    step: int
    flow: FlowState
    mech: MechState
    iterations: int = 0
    increment: float = 0.0
    history: list = field(default_factory=list)
    probes: np.ndarray = None
    p0_mech: np.ndarray = None


class TwoGridProblem:
    """Meshes, material, boundary conditions and the prepared operators.

    With ``single_grid=True`` the mechanics mesh must be the flow mesh and
    fields are handed over without projection (reference path).
    """

    def __init__(self, flow_mesh, mech_mesh, mat, flow_bc=None, mech_bc=None,
                 tol=DEFAULT_TOL, single_grid=False, half_trans="normal"):
        self.flow_mesh = flow_mesh
        self.mech_mesh = mech_mesh
        self.mat = mat
        self.flow_bc = flow_bc or FlowBcSpec()
        self.mech_bc = mech_bc or MechBcSpec()
        self.single_grid = single_grid
        self.grid = build_fv_grid(flow_mesh, mat.k, mat.mu, half_trans=half_trans)
        self.flow_bc.validate(self.grid)
        if single_grid:
            if mech_mesh is not flow_mesh:
                raise ValidationError("single_grid", "needs the same mesh object for both physics")
            self.pairs = self.f2m = self.m2f = None
        else:
            self.pairs, self.f2m, self.m2f = two_grid_operators(flow_mesh, mech_mesh, tol)
            if len(self.f2m.uncovered) or len(self.m2f.uncovered):
                logger.warning("uncovered elements: %d mechanics, %d flow",
                               len(self.f2m.uncovered), len(self.m2f.uncovered))
        self.grads = shape_gradients(mech_mesh)
        self.K = assemble_stiffness(mech_mesh, mat)
        self.constraints = ConstrainedSystem(mech_mesh, self.K, self.mech_bc)
        self.f_body = assemble_body_force(mech_mesh, mat)
        self.f_surface = assemble_traction(mech_mesh, self.mech_bc)
        self._volumes = self.grid.volumes

    # transfers
    def to_mech(self, p_flow, previous):
        if self.single_grid:
            return p_flow.copy()
        return apply_projection(self.f2m, p_flow, previous=previous)

    def to_flow(self, values, previous):
        if self.single_grid:
            return values.copy()
        return apply_projection(self.m2f, values, previous=previous)

    def vnorm(self, x):
        v = self._volumes
        return float(np.sqrt(np.sum(v * x * x) / np.sum(v)))

    def mechanics(self, p_mech, p0_mech, u_prev=None, loaded=True):
        f = self.f_body + assemble_pressure_load(self.mech_mesh, self.mat, p_mech, p0_mech, self.grads)
        if loaded:
            f = f + self.f_surface
        x0 = None if u_prev is None else u_prev.ravel()
        u = self.constraints.solve(f, x0=x0, plate_scale=1.0 if loaded else 0.0).reshape(-1, 3)
        eps_v, sigma_v = element_strain_stress(self.mech_mesh, self.mat, u, p_mech, p0_mech,
                                               grads=self.grads)
        return MechState(u=u, eps_v=eps_v, sigma_v=sigma_v, p_mech=p_mech)


def initial_equilibrium(problem, p0=0.0):
    """State at t = 0: body forces only (surface and plate loads act from t = 0+)."""
    nf = problem.grid.n_cells
    p0_flow = np.broadcast_to(np.asarray(p0, dtype=float), (nf,)).copy()
    p0_mech = problem.to_mech(p0_flow, previous=np.zeros(problem.mech_mesh.n_elements))
    mech = problem.mechanics(p0_mech, p0_mech, loaded=False)
    zeros = np.zeros(nf)
    eps_f = problem.to_flow(mech.eps_v, previous=zeros)
    sig_f = problem.to_flow(mech.sigma_v, previous=zeros)
    flow = FlowState(p=p0_flow, eps_v=eps_f, sigma_v=sig_f, p0=p0_flow, sigma_v0=sig_f)
    return CoupledState(time=0.0, step=0, flow=flow, mech=mech, p0_mech=p0_mech)


def fixed_stress_step(state, problem, cfg, dt):
    """Advance one time step with converged fixed-stress iterations.

    ``iterations`` counts convergence checks: the first pass is the drained
    predictor, every later pass is compared with its predecessor.

    Raises:
        NotConverged: fs_maxiter checks without meeting the tolerance (unless
            ``cfg.continue_on_failure``).
    """
    flow_n = state.flow
    mat = problem.mat
    p0_mech = state.p0_mech
    sigma_k = flow_n.sigma_v
    eps_k = flow_n.eps_v
    p_prev = None
    p_iter = flow_n.p
    p_mech = state.mech.p_mech
    u = state.mech.u
    history = []
    mech = state.mech
    converged = False

    for k in range(cfg.fs_maxiter + 1):
        system = assemble_flow_step(problem.grid, mat, flow_n, sigma_k, dt, problem.flow_bc)
        p_new = solve_flow_step(system, x0=p_iter)
        p_mech = problem.to_mech(p_new, previous=p_mech)
        mech = problem.mechanics(p_mech, p0_mech, u_prev=u)
        u = mech.u
        eps_k = problem.to_flow(mech.eps_v, previous=eps_k)
        sigma_k = problem.to_flow(mech.sigma_v, previous=sigma_k)
        p_prev, p_iter = p_iter, p_new
        if k == 0:
            continue
        inc = problem.vnorm(p_iter - p_prev)
        history.append(inc)
        if inc <= cfg.fs_tol * max(problem.vnorm(p_iter), cfg.p_scale):
            converged = True
            break

    flow = flow_n.copy(p=p_iter, eps_v=eps_k, sigma_v=sigma_k)
    new = CoupledState(time=state.time + dt, step=state.step + 1, flow=flow, mech=mech,
                       iterations=len(history), increment=history[-1] if history else 0.0,
                       history=history, p0_mech=p0_mech)
    if not converged:
        diag = {"step": new.step, "time": new.time, "history": history}
        if not cfg.continue_on_failure:
            raise NotConverged(
                f"fixed-stress iteration stalled at step {new.step} "
                f"(increment {history[-1]:.3e} after {len(history)} iterations)", diag)
        logger.warning("step %d not converged (increment %.3e)", new.step, history[-1])
    return new


def run_simulation(problem, cfg, probes=(), p0=0.0, callback=None):
    """Initial equilibrium followed by the configured fixed-stress steps.

    ``probes`` are points located in the flow mesh; their element pressures
    are recorded on every snapshot. ``callback(state)`` is invoked for each
    snapshot, including the initial one.
    """
    probe_elems = np.array([problem.flow_mesh.locate(pt) for pt in probes], dtype=np.int64)
    state = initial_equilibrium(problem, p0)
    state.probes = state.flow.p[probe_elems]
    snapshots = [state]
    if callback:
        callback(state)
    for dt in cfg.schedule():
        state = fixed_stress_step(state, problem, cfg, dt)
        state.probes = state.flow.p[probe_elems]
        snapshots.append(state)
        if callback:
            callback(state)
    return snapshots

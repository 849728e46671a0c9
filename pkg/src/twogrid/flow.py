"""Cell-centred finite-volume flow step in fixed-stress form.

Per cell i with bulk volume V_i, backward Euler gives

    V_i S (p_i - p_i^n)/dt + V_i (b/K_dr)(sv_i - sv_i^n)/dt
        + sum_j (T_ij/mu)(Phi_i - Phi_j) = V_i f_i,

with S = b^2/K_dr + 1/M, sv the volumetric total stress (lagged at the
latest mechanics iterate) and Phi = p - rho_f g.x the flow potential.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sps

from .errors import NonPositiveDt, SingularSystem, SizeMismatch, ValidationError
from .linalg import pcg

NO_FLOW = "no_flow"
FIXED_PRESSURE = "fixed_pressure"


@dataclass
class FlowState:
    p: np.ndarray
    eps_v: np.ndarray
    sigma_v: np.ndarray
    p0: np.ndarray
    sigma_v0: np.ndarray

    def __post_init__(self):
        n = len(self.p)
        for name in ("eps_v", "sigma_v", "p0", "sigma_v0"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            setattr(self, name, arr)
        self.p = np.asarray(self.p, dtype=float).copy()

    @classmethod
    def at_rest(cls, n, p0=0.0, sigma_v0=0.0):
        p0 = np.broadcast_to(np.asarray(p0, dtype=float), (n,)).copy()
        sv = np.broadcast_to(np.asarray(sigma_v0, dtype=float), (n,)).copy()
        return cls(p=p0.copy(), eps_v=np.zeros(n), sigma_v=sv.copy(), p0=p0, sigma_v0=sv)

    def copy(self, **changes):
        return replace(self, **changes)


@dataclass
class FlowBcSpec:
    """Boundary conditions per tag plus an optional per-cell source.

    ``conditions`` maps tag -> ("no_flow",) or ("fixed_pressure", value).
    Unlisted tags are no-flow. ``source`` is a volumetric rate per bulk
    volume (1/s).
    """

    conditions: dict = field(default_factory=dict)
    source: np.ndarray = None

    def fixed(self):
        out = {}
        for tag, cond in self.conditions.items():
            kind = cond[0] if isinstance(cond, (tuple, list)) else cond
            if kind == FIXED_PRESSURE:
                out[tag] = float(cond[1])
            elif kind != NO_FLOW:
                raise ValidationError(f"bc.{tag}.flow", f"unknown condition {kind!r}")
        return out

    def validate(self, grid):
        known = set(grid.bconn_tag)
        for tag in self.conditions:
            if tag not in known:
                raise ValidationError(f"bc.{tag}.flow", "tag not present in the flow mesh")
        self.fixed()
        if self.source is not None and np.shape(self.source) not in ((), (grid.n_cells,)):
            raise SizeMismatch("source must be scalar or one value per cell")


@dataclass
class FlowSystem:
    A: sps.csr_matrix
    rhs: np.ndarray
    accumulation: np.ndarray  # V S / dt per cell
    dt: float
    x0: np.ndarray = None


def fluid_density(mat, p, p0):
    return mat.rho_f0 * (1.0 + mat.compressibility * (np.asarray(p) - p0))


def _gravity_drop(grid, mat, rho_cells):
    """rho g.(x_i - x_j) per interior connection and rho g.(x_i - x_face) per boundary one."""
    g = np.asarray(mat.gravity)
    if not np.any(g):
        return None, None
    i, j = grid.conn[:, 0], grid.conn[:, 1]
    rho_face = 0.5 * (rho_cells[i] + rho_cells[j])
    inner = rho_face * ((grid.centroids[i] - grid.centroids[j]) @ g)
    e = grid.bconn_elem
    outer = rho_cells[e] * ((grid.centroids[e] - grid.bconn_centroid) @ g)
    return inner, outer


def assemble_flow_step(grid, mat, state, sigma_v_new, dt, bc):
    """Linear system (A, rhs) of one backward-Euler flow step.

    Dirichlet faces enter through their boundary half-transmissibility, so
    A stays symmetric positive definite.
    """
    if not dt > 0:
        raise NonPositiveDt(f"dt must be positive, got {dt}")
    n = grid.n_cells
    sigma_v_new = np.asarray(sigma_v_new, dtype=float)
    if sigma_v_new.shape != (n,) or state.p.shape != (n,):
        raise SizeMismatch("flow fields must have one value per cell")
    fixed = bc.fixed()

    V = grid.volumes
    acc = V * mat.storage_fixed_stress / dt
    rhs = acc * state.p - V * (mat.b / mat.K_dr) * (sigma_v_new - state.sigma_v) / dt
    if bc.source is not None:
        rhs = rhs + V * np.asarray(bc.source, dtype=float)

    t = grid.trans / mat.mu
    i, j = grid.conn[:, 0], grid.conn[:, 1]
    diag = acc.copy()
    np.add.at(diag, i, t)
    np.add.at(diag, j, t)

    rho = fluid_density(mat, state.p, state.p0)
    g_in, g_out = _gravity_drop(grid, mat, rho)
    if g_in is not None:
        np.add.at(rhs, i, t * g_in)
        np.add.at(rhs, j, -t * g_in)

    has_dirichlet = False
    if fixed:
        tb = grid.bconn_trans / mat.mu
        for k, tag in enumerate(grid.bconn_tag):
            if tag in fixed:
                e = grid.bconn_elem[k]
                diag[e] += tb[k]
                head = fixed[tag] + (g_out[k] if g_out is not None else 0.0)
                rhs[e] += tb[k] * head
                has_dirichlet = True

    if not has_dirichlet and not np.any(acc > 0):
        raise SingularSystem("no fixed-pressure boundary and zero storage")

    rows = np.concatenate([np.arange(n), i, j])
    cols = np.concatenate([np.arange(n), j, i])
    vals = np.concatenate([diag, -t, -t])
    A = sps.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return FlowSystem(A=A, rhs=rhs, accumulation=acc, dt=dt, x0=state.p)


def solve_flow_step(system, x0=None, rtol=1e-10):
    """CG solve of an assembled flow system; warm-started from ``x0``."""
    if x0 is None:
        x0 = system.x0
    return pcg(system.A, system.rhs, x0=x0, rtol=rtol)


def darcy_fluxes(grid, mat, p, p0=0.0):
    """Volumetric flux (m^3/s) across each interior connection, from i to j."""
    p = np.asarray(p, dtype=float)
    if p.shape != (grid.n_cells,):
        raise SizeMismatch("pressure must have one value per cell")
    i, j = grid.conn[:, 0], grid.conn[:, 1]
    q = grid.trans / mat.mu * (p[i] - p[j])
    g_in, _ = _gravity_drop(grid, mat, fluid_density(mat, p, p0))
    if g_in is not None:
        q -= grid.trans / mat.mu * g_in
    return q


def boundary_fluxes(grid, mat, p, bc, p0=0.0):
    """Outward flux (m^3/s) through each boundary connection (zero where no-flow)."""
    p = np.asarray(p, dtype=float)
    fixed = bc.fixed()
    q = np.zeros(len(grid.bconn_elem))
    _, g_out = _gravity_drop(grid, mat, fluid_density(mat, p, p0))
    for k, tag in enumerate(grid.bconn_tag):
        if tag in fixed:
            e = grid.bconn_elem[k]
            head = fixed[tag] + (g_out[k] if g_out is not None else 0.0)
            q[k] = grid.bconn_trans[k] / mat.mu * (p[e] - head)
    return q


def fluid_content_and_porosity(mat, state, p, sigma_v):
    """Fluid content increment and true porosity from pressure and stress.

    zeta = b eps_v + (p - p0)/M, and the porosity follows from
    (rho_f/rho_f0) phi - phi0 = (b/K_dr)(sv - sv0) + S (p - p0).
    """
    p = np.asarray(p, dtype=float)
    dp = p - state.p0
    zeta = mat.b * state.eps_v + dp / mat.M
    rhs = mat.porosity0 + (mat.b / mat.K_dr) * (np.asarray(sigma_v) - state.sigma_v0) \
        + mat.storage_fixed_stress * dp
    phi = rhs / (1.0 + mat.compressibility * dp)
    return zeta, phi


def solve_diffusion(grid, mat, p_init, dts, bc):
    """Standalone pressure diffusion (no mechanics coupling), one CG solve per step.

    Returns the list of pressure fields after each step.
    """
    n = grid.n_cells
    state = FlowState.at_rest(n, p0=p_init)
    out = []
    for dt in dts:
        system = assemble_flow_step(grid, mat, state, state.sigma_v, dt, bc)
        p = solve_flow_step(system)
        state = state.copy(p=p)
        out.append(p)
    return out


def fixed_strain_residual(grid, mat, state_n, p, eps_v, dt, bc):
    """Per-cell residual of the mass balance written with volumetric strain.

    V (1/M)(p - p^n)/dt + V b (eps_v - eps_v^n)/dt + fluxes - V f. At a
    converged single-grid state this equals the fixed-stress residual, since
    sigma_v - sigma_v0 = K_dr eps_v - b (p - p0) element by element.
    """
    p = np.asarray(p, dtype=float)
    V = grid.volumes
    r = V * ((p - state_n.p) / mat.M + mat.b * (np.asarray(eps_v) - state_n.eps_v)) / dt
    q = darcy_fluxes(grid, mat, p, state_n.p0)
    i, j = grid.conn[:, 0], grid.conn[:, 1]
    np.add.at(r, i, q)
    np.add.at(r, j, -q)
    qb = boundary_fluxes(grid, mat, p, bc, state_n.p0)
    np.add.at(r, grid.bconn_elem, qb)
    if bc.source is not None:
        r -= V * np.asarray(bc.source, dtype=float)
    return r

"""Mandel's problem: closed-form pressure and the two-grid benchmark.

Geometry of the benchmark: the specimen occupies [0, a_x] x [0, b_y] x
[0, t_z]. A rigid, impermeable plate on x = a_x is pushed in -x by a force
F per unit out-of-plane thickness; x = 0 and y = 0 are impermeable rollers,
y = b_y is traction free and drained (p = 0), and u_z = 0 everywhere
(plane strain). Pressure depends on y only and drains over the half-width
b_y, so the classical series applies with drainage coordinate y.
"""
from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .coupling import CouplingConfig, TwoGridProblem, geometric_schedule, run_simulation
from .errors import BracketFailure, ValidationError
from .flow import FIXED_PRESSURE, FlowBcSpec
from .material import PoroelasticMaterial
from .mechanics import MechBcSpec
from .mesh import box_tet_mesh

logger = logging.getLogger(__name__)

# element counts of the two published mesh roles (flow, mechanics) for the
# fine-flow run; the fine-mechanics run swaps them
REFERENCE_MESH_SIZES = {"flow": (5706, 3697), "mech": (3697, 5706)}


def derive_constants(mat):
    """Skempton coefficient B, undrained Poisson ratio nu_u and consolidation coefficient c."""
    K, b, M, nu = mat.K_dr, mat.b, mat.M, mat.nu
    B = b * M / (K + b * b * M)
    bb = b * B * (1.0 - 2.0 * nu)
    nu_u = nu + bb * (1.0 + nu) / (3.0 - bb)  # = (3 nu + bb)/(3 - bb), exact at b = 0
    m_oed = mat.M_oed
    c = (mat.k / mat.mu) * M * m_oed / (m_oed + b * b * M)
    return B, nu_u, c


def root_coefficient(nu, nu_u):
    return (1.0 - nu) / (nu_u - nu)


def mandel_roots(nu, nu_u, n_terms):
    """Positive roots of tan(a) = (1 - nu)/(nu_u - nu) * a, one per bracket.

    alpha_1 lies in (0, pi/2), alpha_n in ((n-1) pi, (n-1) pi + pi/2).
    The pole-free form sin(a) - c a cos(a) is bracketed instead of tan.
    """
    if not nu < nu_u:
        raise BracketFailure(f"need nu < nu_u (got {nu}, {nu_u})")
    coef = root_coefficient(nu, nu_u)

    def g(a):
        return np.sin(a) - coef * a * np.cos(a)

    roots = np.empty(n_terms)
    for n in range(1, n_terms + 1):
        lo = (n - 1) * np.pi
        hi = lo + 0.5 * np.pi
        lo = lo + (1e-9 if n == 1 else 0.0)
        glo, ghi = g(lo), g(hi)
        if not glo * ghi < 0:
            raise BracketFailure(f"no sign change for root {n} in ({lo}, {hi})")
        a = brentq(g, lo, hi, xtol=1e-15 * max(1.0, hi), rtol=4 * np.finfo(float).eps, maxiter=500)
        roots[n - 1] = _polish(g, a)
    return roots


def _polish(g, a, width=4):
    """Best float within a few ulps of a (brentq stops one or two ulps short)."""
    cands = [a]
    lo = hi = a
    for _ in range(width):
        lo = np.nextafter(lo, -np.inf)
        hi = np.nextafter(hi, np.inf)
        cands += [lo, hi]
    return min(cands, key=lambda x: abs(g(x)))


def root_residuals(roots, nu, nu_u):
    """(|tan a - c a|, |sin a - c a cos a|) for each root."""
    coef = root_coefficient(nu, nu_u)
    raw = np.abs(np.tan(roots) - coef * roots)
    scaled = np.abs(np.sin(roots) - coef * roots * np.cos(roots))
    return raw, scaled


@dataclass
class MandelParams:
    a: float  # drainage half-width (m)
    F: float  # plate force per unit out-of-plane thickness (N/m), positive in compression
    B: float
    nu_u: float
    c: float
    nu: float
    roots: np.ndarray = field(repr=False, default=None)
    n_terms: int = 200

    @classmethod
    def from_material(cls, mat, a, F, n_terms=200):
        B, nu_u, c = derive_constants(mat)
        if not nu_u > mat.nu:
            raise ValidationError("b", "the series needs nu_u > nu, which requires b > 0")
        if B > 1.0 or nu_u > 0.5:
            raise ValidationError("M", f"inconsistent moduli give B = {B:.6g}, nu_u = {nu_u:.6g}")
        return cls(a=a, F=F, B=B, nu_u=nu_u, c=c, nu=mat.nu,
                   roots=mandel_roots(mat.nu, nu_u, n_terms), n_terms=n_terms)

    @property
    def sigma0(self):
        return self.F / self.a

    @property
    def p_undrained(self):
        """Skempton pressure at t = 0+: B (1 + nu_u) sigma0 / 3."""
        return self.B * (1.0 + self.nu_u) * self.sigma0 / 3.0

    def with_terms(self, n_terms):
        return MandelParams(a=self.a, F=self.F, B=self.B, nu_u=self.nu_u, c=self.c, nu=self.nu,
                            roots=mandel_roots(self.nu, self.nu_u, n_terms), n_terms=n_terms)


def mandel_pressure(params, xi, t):
    """Series pressure p(xi, t); xi = 0 is the no-flow plane, xi = a drains.

    Broadcasts over ``xi`` and ``t`` (t > 0).
    """
    xi = np.asarray(xi, dtype=float)
    t = np.asarray(t, dtype=float)
    al = params.roots[: params.n_terms]
    shape = np.broadcast(xi, t).shape
    xi_b = np.broadcast_to(xi, shape)[..., None]
    t_b = np.broadcast_to(t, shape)[..., None]
    amp = np.sin(al) / (al - np.sin(al) * np.cos(al))
    space = np.cos(al * (xi_b / params.a)) - np.cos(al)  # xi = a gives exactly zero
    decay = np.exp(-al**2 * params.c * t_b / params.a**2)
    pref = 2.0 * params.F * params.B * (1.0 + params.nu_u) / (3.0 * params.a)
    out = pref * np.sum(amp * space * decay, axis=-1)
    return out if shape else float(out)


# ----------------------------------------------------------------------------
# benchmark

def default_material():
    """Stiff sandstone-like rock with water; b = 1, nu = 0.2, nu_u = 0.44."""
    return PoroelasticMaterial(E=5.94e9, nu=0.2, b=1.0, M=1.65e10, k=9.869e-14, mu=1e-3,
                               rho_f0=1000.0, rho_s=2650.0, phi0=0.2)


@dataclass
class MandelSetup:
    a_x: float = 50.0
    b_y: float = 50.0
    t_z: float = 12.5
    force: float = 6.0e8  # N/m of out-of-plane thickness
    fine: tuple = (12, 12, 3)
    coarse: tuple = (8, 8, 2)
    n_ramp: int = 40  # geometric steps from dt_first to dt_last
    dt_first_factor: float = 1e-4  # in units of tau = b_y^2 / c
    dt_last_factor: float = 0.1
    t_end_factor: float = 2.0  # constant dt_last steps continue until this time (None: ramp only)
    fs_tol: float = 1e-6
    fs_maxiter: int = 50
    n_terms: int = 200


def ramp_schedule(dt_first, dt_last, n_ramp, t_end=None):
    """Geometric ramp from dt_first to dt_last, then constant dt_last steps
    until the accumulated time reaches t_end (the last step may overshoot)."""
    steps = list(geometric_schedule(dt_first, dt_last, n_ramp))
    if t_end is not None:
        total = float(np.sum(steps))
        while total < t_end * (1.0 - 1e-12):
            steps.append(dt_last)
            total += dt_last
    return np.array(steps)


def mandel_meshes(setup, fine_which):
    fine = box_tet_mesh(*setup.fine, setup.a_x, setup.b_y, setup.t_z)
    coarse = box_tet_mesh(*setup.coarse, setup.a_x, setup.b_y, setup.t_z)
    if fine_which == "flow":
        flow, mech = fine, coarse
    elif fine_which == "mech":
        flow, mech = coarse, fine
    else:
        raise ValidationError("fine", "must be 'flow' or 'mech'")
    return flow, mech


def mandel_bcs(setup):
    flow_bc = FlowBcSpec({"ymax": (FIXED_PRESSURE, 0.0)})
    mech_bc = MechBcSpec(
        fixed={"xmin": {"x": 0.0}, "ymin": {"y": 0.0}},
        rigid_plate={"xmax": ("x", -setup.force * setup.t_z)},
        plane_strain="z",
    )
    return flow_bc, mech_bc


def mandel_problem(setup, mat, fine_which="flow"):
    flow, mech = mandel_meshes(setup, fine_which)
    flow_bc, mech_bc = mandel_bcs(setup)
    return TwoGridProblem(flow, mech, mat, flow_bc, mech_bc)


def mandel_schedule(setup, c):
    tau = setup.b_y**2 / c
    t_end = None if setup.t_end_factor is None else setup.t_end_factor * tau
    return ramp_schedule(setup.dt_first_factor * tau, setup.dt_last_factor * tau, setup.n_ramp, t_end)


def probe_point(setup):
    return np.array([setup.a_x, 0.0, 0.5 * setup.t_z])


def relative_l2_in_time(t, num, ref):
    """sqrt(int (num - ref)^2 dt / int ref^2 dt), trapezoidal in t."""
    t, num, ref = (np.asarray(v, dtype=float) for v in (t, num, ref))
    return float(np.sqrt(np.trapezoid((num - ref) ** 2, t) / np.trapezoid(ref**2, t)))


@dataclass
class MandelReport:
    fine: str
    n_flow: int
    n_mech: int
    times: np.ndarray
    p_num: np.ndarray
    p_ana: np.ndarray
    params: MandelParams
    iterations: list
    pairs: int
    runtime: float
    snapshots: list = field(default=None, repr=False)
    problem: object = field(default=None, repr=False)

    @property
    def rel_l2(self):
        return relative_l2_in_time(self.times, self.p_num, self.p_ana)

    @property
    def peak_ratio(self):
        return float(self.p_num.max() / self.p_num[0])

    @property
    def final_ratio(self):
        return float(self.p_num[-1] / self.p_num.max())

    @property
    def nonmonotonic(self):
        k = int(np.argmax(self.p_num))
        return bool(0 < k < len(self.p_num) - 1 and self.p_num[k] > self.p_num[0])

    @property
    def undrained_error(self):
        return float(abs(self.p_num[0] / self.params.p_undrained - 1.0))

    def summary(self, runtime=False):
        it = np.asarray(self.iterations)
        lines = [
            f"fine = {self.fine}",
            f"flow_elements = {self.n_flow}",
            f"mech_elements = {self.n_mech}",
            f"pairs = {self.pairs}",
            f"steps = {len(self.times)}",
            f"B = {self.params.B!r}",
            f"nu_u = {self.params.nu_u!r}",
            f"c = {self.params.c!r}",
            f"p_undrained = {self.params.p_undrained!r}",
            f"rel_l2_error = {self.rel_l2!r}",
            f"undrained_error = {self.undrained_error!r}",
            f"peak_ratio = {self.peak_ratio!r}",
            f"final_over_peak = {self.final_ratio!r}",
            f"nonmonotonic: {str(self.nonmonotonic).lower()}",
            f"iterations_min = {int(it.min())}",
            f"iterations_max = {int(it.max())}",
            f"iterations_mean = {float(it.mean())!r}",
        ]
        if runtime:
            lines.append(f"runtime_s = {self.runtime:.2f}")
        return "\n".join(lines) + "\n"

    def probe_csv(self):
        rows = ["t,p_num,p_ana,err"]
        for t, pn, pa in zip(self.times, self.p_num, self.p_ana):
            rows.append(",".join(repr(float(v)) for v in (t, pn, pa, pn - pa)))
        return "\n".join(rows) + "\n"

    def analytic_csv(self, n_xi=21):
        xi = np.linspace(0.0, self.params.a, n_xi)
        rows = ["t," + ",".join(f"p(y={v:.6g})" for v in xi)]
        for t in self.times:
            vals = mandel_pressure(self.params, xi, t)
            rows.append(f"{float(t)!r}," + ",".join(repr(float(v)) for v in vals))
        return "\n".join(rows) + "\n"


def mandel_benchmark(fine_which="flow", setup=None, mat=None, schedule=None, callback=None,
                     keep_states=False):
    """Run the two-grid Mandel benchmark and compare the probe to the series.

    The probe is the flow element at the corner (x = a_x, y = 0), under the
    plate on the no-flow plane; the analytic pressure is evaluated at y = 0.
    ``schedule`` overrides the default ramp built from ``setup``.
    """
    setup = setup or MandelSetup()
    mat = mat or default_material()
    start = _time.perf_counter()
    problem = mandel_problem(setup, mat, fine_which)
    params = MandelParams.from_material(mat, setup.b_y, setup.force, setup.n_terms)
    if schedule is None:
        schedule = mandel_schedule(setup, params.c)
    cfg = CouplingConfig(dt=np.asarray(schedule, dtype=float), fs_tol=setup.fs_tol,
                         fs_maxiter=setup.fs_maxiter)
    snaps = run_simulation(problem, cfg, probes=[probe_point(setup)], callback=callback)
    steps = snaps[1:]
    times = np.array([s.time for s in steps])
    p_num = np.array([s.probes[0] for s in steps])
    p_ana = mandel_pressure(params, 0.0, times)
    report = MandelReport(
        fine=fine_which, n_flow=problem.flow_mesh.n_elements, n_mech=problem.mech_mesh.n_elements,
        times=times, p_num=p_num, p_ana=np.asarray(p_ana), params=params,
        iterations=[s.iterations for s in steps], pairs=len(problem.pairs),
        runtime=_time.perf_counter() - start,
        snapshots=snaps if keep_states else None, problem=problem if keep_states else None,
    )
    logger.info("mandel fine=%s rel_l2=%.4f in %.1fs", fine_which, report.rel_l2, report.runtime)
    return report

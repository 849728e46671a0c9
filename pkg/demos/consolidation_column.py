# coding: utf-8

# # A loaded column draining through its top
#
# A column with rollers on its sides and base is loaded on top and drains
# there. This is the one-dimensional consolidation setting. The script
# runs the fixed-stress driver directly with flow and mechanics on
# different meshes.

import numpy as np

from twogrid import (CouplingConfig, PoroelasticMaterial, TwoGridProblem, box_tet_mesh,
                     run_simulation)
from twogrid.coupling import geometric_schedule
from twogrid.flow import FIXED_PRESSURE, FlowBcSpec
from twogrid.mechanics import MechBcSpec

# ## Material and meshes

mat = PoroelasticMaterial(E=1.0e9, nu=0.25, b=1.0, M=5.0e9, k=1e-13, mu=1e-3)
height, load = 10.0, 1.0e6
flow_mesh = box_tet_mesh(1, 1, 20, 1.0, 1.0, height)
mech_mesh = box_tet_mesh(1, 1, 8, 1.0, 1.0, height)

# ## Boundary conditions
#
# Pressure is held at zero on the top face. The load acts there as a
# traction.

flow_bc = FlowBcSpec({"zmax": (FIXED_PRESSURE, 0.0)})
rollers = {"xmin": {"x": 0.0}, "xmax": {"x": 0.0}, "ymin": {"y": 0.0}, "ymax": {"y": 0.0},
           "zmin": {"z": 0.0}}
mech_bc = MechBcSpec(fixed=rollers, traction={"zmax": (0.0, 0.0, -load)})
problem = TwoGridProblem(flow_mesh, mech_mesh, mat, flow_bc, mech_bc)

# ## Time stepping

m_oed = mat.M_oed
c = (mat.k / mat.mu) * mat.M * m_oed / (m_oed + mat.b**2 * mat.M)
tau = height**2 / c
cfg = CouplingConfig(dt=geometric_schedule(1e-4 * tau, 0.2 * tau, 30))
snaps = run_simulation(problem, cfg, probes=[(0.5, 0.5, 0.1)])

# ## Base pressure and top settlement

undrained = mat.b * mat.M / (m_oed + mat.b**2 * mat.M) * load
top = np.isclose(mech_mesh.nodes[:, 2], height)
for s in snaps[1::5]:
    settlement = -s.mech.u[top, 2].mean()
    print(f"t/tau = {s.time / tau:8.4f}  p_base/p_undrained = {s.probes[0] / undrained:6.3f}  "
          f"settlement = {settlement * 1e3:7.3f} mm  iterations = {s.iterations}")

print("drained settlement limit:", load * height / m_oed * 1e3, "mm")

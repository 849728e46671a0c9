# coding: utf-8

# # Mandel's problem on two grids
#
# A poroelastic slab is squeezed by a rigid plate and drains through one
# face. Pressure far from the drained face first rises above its undrained
# value before it decays. The script runs both mesh assignments and
# compares the corner pressure with the series solution.

import numpy as np

from twogrid.mandel import MandelSetup, mandel_benchmark, relative_l2_in_time

setup = MandelSetup()
print("box", setup.a_x, "x", setup.b_y, "x", setup.t_z, "m; plate force", setup.force, "N/m")

# ## Fine flow mesh, coarse mechanics mesh

flow_run = mandel_benchmark("flow", setup)
print(flow_run.summary(runtime=True))

# ## Fine mechanics mesh, coarse flow mesh

mech_run = mandel_benchmark("mech", setup)
print(mech_run.summary(runtime=True))

# ## How close are the two runs to each other?

print("difference between runs:",
      relative_l2_in_time(flow_run.times, mech_run.p_num, flow_run.p_num))

# ## The corner pressure over time
#
# Normalized by the undrained pressure; the rise above 1 is the
# Mandel-Cryer effect.

p0 = flow_run.params.p_undrained
tau = setup.b_y**2 / flow_run.params.c
for t, pn, pa in list(zip(flow_run.times, flow_run.p_num, flow_run.p_ana))[::6]:
    print(f"t/tau = {t / tau:9.5f}   numeric {pn / p0:6.3f}   series {pa / p0:6.3f}")

# ## Optional plot

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    plt.semilogx(flow_run.times / tau, flow_run.p_num / p0, "o", label="fine flow")
    plt.semilogx(mech_run.times / tau, mech_run.p_num / p0, "x", label="fine mechanics")
    fine_t = np.logspace(np.log10(flow_run.times[0]), np.log10(flow_run.times[-1]), 200)
    from twogrid.mandel import mandel_pressure
    plt.semilogx(fine_t / tau, mandel_pressure(flow_run.params, 0.0, fine_t) / p0, label="series")
    plt.xlabel("t / tau")
    plt.ylabel("p / p_undrained")
    plt.legend()
    plt.savefig("mandel_corner_pressure.png", dpi=120)
    print("wrote mandel_corner_pressure.png")

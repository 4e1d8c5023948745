# Tour of the powertrain model: battery circuit, fuel map, road loads.
#
# Produces demos/out/powertrain.png with four panels:
#   - battery SOC rate vs battery power (the square-root current law)
#   - fuel rate vs engine power (linear map, exactly zero when off)
#   - road-load power vs speed on a flat road
#   - acceleration achievable from a given power demand at several speeds

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from phevmerge.phev import (
    PhevParams,
    demand_for_accel,
    fuel_rate,
    longitudinal_accel,
    soc_derivative,
)

p = PhevParams()
out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)

fig, axes = plt.subplots(2, 2, figsize=(11, 7))

# battery: discharge drains SOC faster than the same recuperation refills it,
# because the internal resistance burns part of either flow
p_b = np.linspace(p.p_b_min, p.p_b_max, 400)
axes[0, 0].plot(p_b / 1e3, [3600 * soc_derivative(0.6, x, p) for x in p_b])
axes[0, 0].set_xlabel("battery power [kW]")
axes[0, 0].set_ylabel("dSOC/dt [1/h]")
axes[0, 0].set_title("equivalent-circuit SOC dynamics (SOC = 0.6)")
axes[0, 0].axvline(0, color="k", lw=0.5)

p_eng = np.linspace(0, p.p_eng_max, 200)
axes[0, 1].plot(p_eng / 1e3, [1e3 * fuel_rate(x, p) for x in p_eng])
axes[0, 1].set_xlabel("engine power [kW]")
axes[0, 1].set_ylabel("fuel rate [g/s]")
axes[0, 1].set_title("linear fuel map (optimal-line operation)")

v = np.linspace(1, 35, 200)
road_load = [demand_for_accel(x, 0.0, 0.0, p) / 1e3 for x in v]
axes[1, 0].plot(v, road_load)
axes[1, 0].set_xlabel("speed [m/s]")
axes[1, 0].set_ylabel("power demand to cruise [kW]")
axes[1, 0].set_title("road load on a flat road")

for speed in (10, 20, 30):
    pd = np.linspace(-80e3, 133e3, 300)
    axes[1, 1].plot(pd / 1e3, [longitudinal_accel(speed, x, 0.0, p) for x in pd],
                    label=f"v = {speed} m/s")
axes[1, 1].set_xlabel("power demand [kW]")
axes[1, 1].set_ylabel("acceleration [m/s$^2$]")
axes[1, 1].set_title("longitudinal dynamics (note the efficiency kink at 0)")
axes[1, 1].legend()

fig.tight_layout()
path = os.path.join(out, "powertrain.png")
fig.savefig(path, dpi=120)
print(f"wrote {path}")

# energy prices make regeneration literally pay back:
from phevmerge.phev import step_cost
_, fuel_cost, elec_cost = step_cost(0.0, -20000.0, 1.0, p)
print(f"one second of 20 kW regeneration is worth {-elec_cost*100:.3f} cents")

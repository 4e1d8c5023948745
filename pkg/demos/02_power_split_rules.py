# How a demand becomes engine / motor-generator / friction-brake powers.
#
# Sweeps the blended charge-depleting rule across the whole demand range
# and shows where each component picks up load, where regenerative braking
# hands over to friction, and where the demand saturates. Also sweeps the
# direct-control combined channel used by the co-optimization interface.

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from phevmerge.phev import PhevParams
from phevmerge.powersplit import blended_cd, mg_limits, resolve_coop

p = PhevParams()
out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)

lower, upper = mg_limits(p)
print(f"motor-generator window after battery coupling: "
      f"[{lower/1e3:.1f}, {upper/1e3:.1f}] kW")

demands = np.linspace(-180e3, 180e3, 721)
splits = [blended_cd(x, 25.0, p) for x in demands]

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 4.5))
ax1.plot(demands / 1e3, [s.split.p_eng / 1e3 for s in splits], label="engine")
ax1.plot(demands / 1e3, [s.split.p_mg / 1e3 for s in splits],
         label="motor-generator")
ax1.plot(demands / 1e3, [s.split.p_fbk / 1e3 for s in splits],
         label="friction brake")
sat = np.array([s.saturated for s in splits])
ax1.fill_between(demands / 1e3, -100, 100, where=sat, alpha=0.15,
                 color="red", label="saturated")
ax1.set_xlabel("power demand [kW]")
ax1.set_ylabel("component power [kW]")
ax1.set_title("blended charge-depleting split at 25 m/s")
ax1.legend(loc="upper left", fontsize=8)

# direct control: one combined motor+brake channel; regeneration first
cbs = np.linspace(p.p_g_min + p.p_brk_min, p.p_m_max, 500)
coop = [resolve_coop(0.0, x, p) for x in cbs]
ax2.plot(cbs / 1e3, [s.split.p_mg / 1e3 for s in coop],
         label="motor-generator")
ax2.plot(cbs / 1e3, [s.split.p_fbk / 1e3 for s in coop],
         label="friction brake")
ax2.set_xlabel("combined channel command [kW]")
ax2.set_ylabel("component power [kW]")
ax2.set_title("direct-control channel: generator before friction")
ax2.legend(fontsize=8)

fig.tight_layout()
path = os.path.join(out, "power_split.png")
fig.savefig(path, dpi=120)
print(f"wrote {path}")

print("\nelectric-only region ends at "
      f"{upper/1e3:.1f} kW; engine+battery together top out at "
      f"{(p.p_eng_max + upper)/1e3:.1f} kW")

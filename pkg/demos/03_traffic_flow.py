# Heterogeneous main-road traffic by itself: a time-space diagram.
#
# Vehicles spawn upstream with personal desired speeds (clipped normal
# around the 29.06 m/s limit) and time headways, follow each other with
# the IDM, and leave downstream. Faster drivers close up on slower ones,
# producing the density variation the merging policy has to cope with.

import os
import random
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from phevmerge.traffic import RoadConfig, TrafficState, step_traffic

cfg = RoadConfig()
state = TrafficState()
rng = random.Random(12)

trails = defaultdict(list)
for step in range(3000):  # five minutes of traffic
    step_traffic(state, None, rng, cfg)
    for veh in state.vehicles:
        trails[veh.id].append((step * cfg.dt, veh.d))

out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)
fig, ax = plt.subplots(figsize=(11, 6))
for vid, pts in trails.items():
    t, d = zip(*pts)
    ax.plot(t, d, lw=0.6)
ax.axhline(0, color="k", ls="--", lw=0.8, label="merge point")
ax.axhspan(-cfg.junction_half_len, cfg.junction_half_len, alpha=0.12,
           color="orange", label="junction")
ax.set_xlabel("time [s]")
ax.set_ylabel("distance to merge point [m]")
ax.set_title("main-road trajectories (no merging vehicle)")
ax.legend(loc="lower right")
fig.tight_layout()
path = os.path.join(out, "traffic.png")
fig.savefig(path, dpi=120)
print(f"wrote {path}")

speeds = [v.desired_speed for v in state.vehicles]
print(f"{len(trails)} vehicles seen; desired speeds on the road now: "
      f"{min(speeds):.1f} .. {max(speeds):.1f} m/s")

# One merging episode, panel by panel: positions, speed, acceleration and
# jerk, the resolved component powers, battery SOC, and instantaneous cost.
#
# Drives the co-optimization interface with a simple scripted controller
# (ease off, then power through) so the demo needs no trained checkpoint.
# Point 05_train_small.py's checkpoint at trace() to plot a learned policy
# instead.

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from phevmerge.harness import load_config, make_env

cfg = load_config()
env = make_env("coop", cfg, seed=42)


def scripted_action(step):
    # glide for 2 s (mild regen), then steady electric push
    if step < 20:
        return np.array([-1.0, 0.30])
    return np.array([-0.6, 0.55])


obs = env.reset(seed=7)
rows = []
done = False
step = 0
while not done:
    obs, reward, done, info = env.step(scripted_action(step))
    raw = obs.values
    split = info["split"]
    rows.append(dict(t=step * cfg.road.dt, d_p2=raw[0], d_p1=raw[2], d=raw[4],
                     d_f1=raw[8], d_f2=raw[10], v=raw[5], a=raw[6],
                     j=info["jerk"], p_d=split.p_d, p_eng=split.p_eng,
                     p_mg=split.p_mg, p_fbk=split.p_fbk, p_b=split.p_b,
                     soc=info["soc"], cost=info["cost"],
                     r=reward.total))
    step += 1

outcome = "success" if info["success"] else ("collision" if info["collision"]
                                             else "stop")
print(f"episode ended with {outcome} after {step} steps, "
      f"return {sum(r['r'] for r in rows):+.3f}")

t = [r["t"] for r in rows]
fig, axes = plt.subplots(3, 2, figsize=(12, 9), sharex=True)

ax = axes[0, 0]
for key, label in (("d_p2", "second ahead"), ("d_p1", "first ahead"),
                   ("d", "merging vehicle"), ("d_f1", "first behind"),
                   ("d_f2", "second behind")):
    ax.plot(t, [r[key] for r in rows],
            lw=2 if key == "d" else 1, label=label)
ax.axhline(0, color="k", lw=0.5)
ax.set_ylabel("distance to merge point [m]")
ax.legend(fontsize=7)

axes[0, 1].plot(t, [r["v"] for r in rows])
axes[0, 1].set_ylabel("speed [m/s]")

axes[1, 0].plot(t, [r["a"] for r in rows], label="acceleration")
axes[1, 0].set_ylabel("a [m/s$^2$]")
ax2 = axes[1, 0].twinx()
ax2.plot(t, [r["j"] for r in rows], color="gray", lw=0.7, label="jerk")
ax2.set_ylabel("j [m/s$^3$]")

ax = axes[1, 1]
for key in ("p_d", "p_eng", "p_mg", "p_fbk", "p_b"):
    ax.plot(t, [r[key] / 1e3 for r in rows], label=key)
ax.set_ylabel("power [kW]")
ax.legend(fontsize=7)

axes[2, 0].plot(t, [r["soc"] for r in rows])
axes[2, 0].set_ylabel("battery SOC")
axes[2, 0].set_xlabel("time [s]")

axes[2, 1].plot(t, [100 * r["cost"] for r in rows])
axes[2, 1].set_ylabel("step cost [cents]")
axes[2, 1].set_xlabel("time [s]")

out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)
path = os.path.join(out, "episode.png")
fig.tight_layout()
fig.savefig(path, dpi=120)
print(f"wrote {path}")

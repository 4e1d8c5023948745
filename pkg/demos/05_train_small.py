# A small but real training run of the co-optimization policy.
#
# 15k environment steps is enough to watch the soft actor-critic pull the
# episodic return out of the hard-braking regime (minutes on one core; the
# full protocol in the README uses 200k steps and best-of-two selection).
# Writes the learning curve and a reusable policy checkpoint.

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from phevmerge.env import action_space
from phevmerge.harness import (
    config_hash,
    evaluate,
    load_config,
    make_env,
    policy_action_fn,
)
from phevmerge.sac import Policy, SacConfig, save_policy, train

STEPS = 15_000
cfg = load_config()
sac_cfg = SacConfig(warmup_steps=2_000, buffer_capacity=50_000)

progress = []
def watch(row):
    progress.append(row)
    if row["episode"] % 25 == 0:
        tail = np.mean([r["undiscounted_return"] for r in progress[-25:]])
        print(f"episode {row['episode']:4d}  env step {row['env_step']:6d}  "
              f"return(25-ep avg) {tail:+.3f}  alpha {row['alpha']:.4f}")

agent, log = train(lambda s: make_env("coop", cfg, seed=s), sac_cfg,
                   seed=1, total_steps=STEPS, callbacks=[watch])

low, high = action_space("coop", cfg.phev)
policy = Policy.from_agent(agent, "coop", low, high, seed=1,
                           config_hash=config_hash(cfg))
out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)
ckpt = os.path.join(out, "coop_small.ckpt")
save_policy(ckpt, policy)

_, summary = evaluate(policy_action_fn(policy), "coop", cfg, episodes=100,
                      seed=99)
print(f"\n100 deterministic test episodes: collision {summary.collision_rate:.2f}, "
      f"stop {summary.stop_rate:.2f}, success {summary.success_rate:.2f}, "
      f"avg jerk {summary.avg_jerk:.2f} m/s^3")
print(f"checkpoint saved to {ckpt}")

returns = [r["undiscounted_return"] for r in log]
smooth = np.convolve(returns, np.ones(25) / 25, mode="valid")
fig, ax = plt.subplots(figsize=(8, 4.5))
ax.plot(returns, lw=0.4, alpha=0.4, label="episode return")
ax.plot(np.arange(len(smooth)) + 24, smooth, lw=1.5, label="25-episode average")
ax.set_xlabel("episode")
ax.set_ylabel("undiscounted return")
ax.set_title(f"co-optimization training, {STEPS} env steps")
ax.legend()
fig.tight_layout()
path = os.path.join(out, "training_curve.png")
fig.savefig(path, dpi=120)
print(f"wrote {path}")

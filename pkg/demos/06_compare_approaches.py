# Side-by-side evaluation of the three control interfaces.
#
# Uses trained checkpoints when given (pass run directories produced by
# `phevmerge train` as arguments), otherwise falls back to random policies,
# which is still enough to see the structural difference this workbench is
# built around: acceleration-demand control saturates the powertrain while
# the two power-domain interfaces cannot, by construction.

import sys

from phevmerge.harness import (
    compare,
    compare_markdown,
    evaluate,
    load_config,
    policy_action_fn,
    random_action_fn,
)
from phevmerge.sac import load_policy

EPISODES = 300
cfg = load_config()

summaries = []
if len(sys.argv) > 1:
    for run_dir in sys.argv[1:]:
        policy = load_policy(f"{run_dir}/policy.ckpt")
        print(f"evaluating trained {policy.approach} from {run_dir}")
        _, summary = evaluate(policy_action_fn(policy), policy.approach, cfg,
                              EPISODES, seed=7)
        summaries.append(summary)
else:
    print(f"no run directories given; evaluating random policies "
          f"({EPISODES} episodes each)")
    for approach, dim in (("coop", 2), ("seq_power", 1), ("seq_accel", 1)):
        _, summary = evaluate(random_action_fn(dim, seed=3), approach, cfg,
                              EPISODES, seed=7)
        summaries.append(summary)

print()
print(compare_markdown(compare(summaries)))
print("deltas are relative to the power-demand (seq_power) baseline")

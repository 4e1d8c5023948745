"""Command-line front end: train, eval, compare, trace.

Exit codes: 0 on success, 2 on usage/validation problems, 1 on I/O
failures. Set PHEVMERGE_LOG=quiet to silence progress chatter.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from phevmerge import harness
from phevmerge.harness import APPROACH_ALIASES, ConfigError
from phevmerge.sac import CheckpointError, load_policy

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2


def _verbose() -> bool:
    return os.environ.get("PHEVMERGE_LOG", "").lower() != "quiet"


def _say(msg):
    if _verbose():
        print(msg)


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _resolve_config(args):
    overrides = dict(_parse_override(t) for t in (args.set or []))
    return harness.load_config(args.config, overrides)


def _add_common(p):
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="config override, repeatable")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phevmerge",
        description="On-ramp merging + PHEV power split workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one approach")
    _add_common(p)
    p.add_argument("--approach", required=True, choices=sorted(APPROACH_ALIASES))
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=1,
                   help="train N times, keep the best by the selection rule")
    p.add_argument("--select-episodes", type=int, default=200)

    p = sub.add_parser("eval", help="evaluate a trained policy")
    _add_common(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--stochastic", action="store_true",
                   help="sample actions instead of taking the mean")

    p = sub.add_parser("compare", help="merge run summaries into one table")
    p.add_argument("--runs", nargs="+", required=True,
                   help="run directories holding summary.json")
    p.add_argument("--out", default=None, help="CSV output path")

    p = sub.add_parser("trace", help="log one episode's full panel to CSV")
    _add_common(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--traffic-csv", default=None,
                   help="also log every vehicle's trajectory")
    return parser


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    approach = APPROACH_ALIASES[args.approach]
    _say(f"training {approach} for {args.steps} steps "
         f"(seed {args.seed}, repeats {args.repeats})")
    harness.train_and_select(approach, cfg, args.steps, args.seed, args.out,
                             repeats=args.repeats,
                             select_episodes=args.select_episodes)
    _say(f"artifacts in {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    policy = load_policy(args.policy)
    if policy.config_hash != harness.config_hash(cfg):
        _say("warning: evaluation config differs from the training config")
    action_fn = harness.policy_action_fn(
        policy, deterministic=not args.stochastic, seed=args.seed)
    _say(f"evaluating {policy.approach} on {args.episodes} episodes")
    metrics, summary = evaluate_with_progress(action_fn, policy.approach, cfg,
                                              args.episodes, args.seed)
    os.makedirs(args.out, exist_ok=True)
    harness.write_episode_csv(metrics, os.path.join(args.out, "episodes.csv"))
    harness.write_summary(summary, os.path.join(args.out, "summary.json"))
    harness.write_config_snapshot(cfg, os.path.join(args.out, "config.json"))
    _say(f"collision rate {summary.collision_rate:.4f}, "
         f"stop rate {summary.stop_rate:.4f}, "
         f"saturation rate {summary.saturation_rate:.4f}")
    return EXIT_OK


def evaluate_with_progress(action_fn, approach, cfg, episodes, seed):
    progress = max(episodes // 10, 1) if _verbose() and episodes >= 100 else None
    return harness.evaluate(action_fn, approach, cfg, episodes, seed,
                            progress=progress)


def cmd_compare(args) -> int:
    summaries = []
    for run in args.runs:
        path = run if run.endswith(".json") else os.path.join(run, "summary.json")
        summaries.append(harness.read_summary(path))
    rows = harness.compare(summaries)
    if any(row["config_mismatch"] for row in rows):
        _say("warning: summaries were produced under different configs")
    print(harness.compare_markdown(rows), end="")
    if args.out:
        harness.write_compare_csv(rows, args.out)
        _say(f"wrote {args.out}")
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _resolve_config(args)
    policy = load_policy(args.policy)
    metrics = harness.trace_episode(policy, cfg, args.seed, args.out,
                                    traffic_csv=args.traffic_csv)
    outcome = ("success" if metrics.succeeded else
               "collision" if metrics.collided else "stop")
    _say(f"episode finished with {outcome} after {metrics.episode_steps} steps")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "compare": cmd_compare,
            "trace": cmd_trace}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

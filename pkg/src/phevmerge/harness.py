"""Experiment pipeline: configuration, seeded runs, metrics, artifacts.

A run is fully determined by (seed, resolved config). The resolved
configuration is snapshotted next to every artifact and hashed into
checkpoints so that evaluation can detect drift. Evaluation derives one
RNG stream per episode from (seed, episode_id), which makes summaries
independent of execution order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from typing import Callable, Optional

import numpy as np

from phevmerge.env import (
    EpisodeConfig,
    MergingEnv,
    RewardWeights,
    action_space,
)
from phevmerge.phev import PhevParams
from phevmerge.sac import Policy, SacConfig, save_policy, train
from phevmerge.traffic import RoadConfig

SCHEMA_VERSION = 1

# CLI-facing shorthand for the two hierarchical approaches
APPROACH_ALIASES = {
    "coop": "coop",
    "seq1": "seq_power",
    "seq2": "seq_accel",
    "seq_power": "seq_power",
    "seq_accel": "seq_accel",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WorkbenchConfig:
    phev: PhevParams
    road: RoadConfig
    rewards: RewardWeights
    episode: EpisodeConfig
    sac: SacConfig


_SECTIONS = {
    "phev": PhevParams,
    "road": RoadConfig,
    "rewards": RewardWeights,
    "episode": EpisodeConfig,
    "sac": SacConfig,
}


def _coerce(cls, name, value):
    if name == "hidden":
        return tuple(value)
    return value


def _build_section(cls, overrides: dict):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ConfigError(
            f"unknown keys in section {cls.__name__}: {', '.join(unknown)}")
    return cls(**{k: _coerce(cls, k, v) for k, v in overrides.items()})


def load_config(path=None, overrides: Optional[dict] = None) -> WorkbenchConfig:
    """Defaults <- file <- overrides; every key checked by name."""
    merged = {name: {} for name in _SECTIONS}
    if path is not None:
        with open(path) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(raw) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
        for name, section in raw.items():
            if not isinstance(section, dict):
                raise ConfigError(f"section {name!r} must be an object")
            merged[name].update(section)
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        merged[section][key] = value
    cfg = WorkbenchConfig(**{
        name: _build_section(cls, merged[name])
        for name, cls in _SECTIONS.items()
    })
    try:
        cfg.phev.validate()
        cfg.road.validate()
        cfg.rewards.validate()
        cfg.episode.validate()
        cfg.sac.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def config_to_dict(cfg: WorkbenchConfig) -> dict:
    out = {name: asdict(getattr(cfg, name)) for name in _SECTIONS}
    out["sac"]["hidden"] = list(out["sac"]["hidden"])
    return out


def config_hash(cfg: WorkbenchConfig) -> str:
    canon = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def write_config_snapshot(cfg: WorkbenchConfig, path):
    snap = {"schema_version": SCHEMA_VERSION, "config_hash": config_hash(cfg)}
    snap.update(config_to_dict(cfg))
    with open(path, "w") as fh:
        json.dump(snap, fh, indent=2, sort_keys=True)
        fh.write("\n")


def make_env(approach: str, cfg: WorkbenchConfig, seed: int = 0) -> MergingEnv:
    return MergingEnv(approach=approach, params=cfg.phev, road=cfg.road,
                      weights=cfg.rewards, episode=cfg.episode, seed=seed)


# -- per-episode metrics ---------------------------------------------------------


@dataclass(frozen=True)
class EpisodeMetrics:
    episode_id: int
    saturated: bool
    collided: bool
    stopped: bool
    succeeded: bool
    fuel_cost: float
    electricity_cost: float
    combined_cost: float
    mean_abs_jerk: float
    merged_behind: bool
    episode_steps: int


@dataclass(frozen=True)
class RunSummary:
    approach: str
    n_episodes: int
    saturation_rate: float
    collision_rate: float
    stop_rate: float
    success_rate: float
    avg_fuel_cost: float
    avg_electricity_cost: float
    avg_combined_cost: float
    avg_jerk: float
    merge_behind_rate: float
    seed: int
    config_hash: str


def episode_seed(seed: int, episode_id: int) -> int:
    # Knuth multiplicative spread keeps streams disjoint across episodes
    return (seed * 2654435761 + episode_id) % (2 ** 63)


def run_episode(env: MergingEnv, action_fn: Callable, episode_id: int,
                seed: int, step_hook=None) -> EpisodeMetrics:
    """One evaluation episode driven by action_fn(raw_env_observation)."""
    obs = env.reset(seed=episode_seed(seed, episode_id))
    saturated = False
    fuel_cost = elec_cost = 0.0
    jerk_sum = 0.0
    steps = 0
    info = {}
    done = False
    while not done:
        action = action_fn(obs.normalized)
        obs, reward, done, info = env.step(action)
        saturated = saturated or info["saturated"]
        fuel_cost += info["fuel_cost"]
        elec_cost += info["electricity_cost"]
        jerk_sum += abs(info["jerk"])
        steps += 1
        if step_hook is not None:
            step_hook(steps, obs, reward, info)
    # exactly one outcome per episode, in the same priority order the
    # terminal reward uses; a timed-out crawl counts as a stop
    collided = info["collision"]
    stopped = not collided and (info["stop"] or info["timeout"])
    succeeded = not collided and not stopped and info["success"]
    return EpisodeMetrics(
        episode_id=episode_id,
        saturated=saturated,
        collided=collided,
        stopped=stopped,
        succeeded=succeeded,
        fuel_cost=fuel_cost,
        electricity_cost=elec_cost,
        combined_cost=fuel_cost + elec_cost,
        mean_abs_jerk=jerk_sum / max(steps, 1),
        merged_behind=info["merged_behind"],
        episode_steps=steps,
    )


def random_action_fn(action_dim: int, seed: int):
    rng = np.random.default_rng(seed)
    return lambda obs: rng.uniform(-1.0, 1.0, action_dim)


def policy_action_fn(policy: Policy, deterministic: bool = True,
                     seed: int = 0):
    rng = np.random.default_rng(seed)
    return lambda obs: policy.act(obs, rng=rng, deterministic=deterministic)


def evaluate(action_fn: Callable, approach: str, cfg: WorkbenchConfig,
             episodes: int, seed: int, progress=None):
    env = make_env(approach, cfg, seed=seed)
    metrics = []
    for ep in range(episodes):
        metrics.append(run_episode(env, action_fn, ep, seed))
        if progress is not None and (ep + 1) % progress == 0:
            print(f"  [{approach}] {ep + 1}/{episodes} episodes")
    return metrics, aggregate(metrics, approach, seed, config_hash(cfg))


def aggregate(metrics, approach: str, seed: int, cfg_hash: str) -> RunSummary:
    n = len(metrics)
    if n == 0:
        raise ValueError("no episodes to aggregate")
    frac = lambda flag: sum(getattr(m, flag) for m in metrics) / n
    return RunSummary(
        approach=approach,
        n_episodes=n,
        saturation_rate=frac("saturated"),
        collision_rate=frac("collided"),
        stop_rate=frac("stopped"),
        success_rate=frac("succeeded"),
        avg_fuel_cost=sum(m.fuel_cost for m in metrics) / n,
        avg_electricity_cost=sum(m.electricity_cost for m in metrics) / n,
        avg_combined_cost=sum(m.combined_cost for m in metrics) / n,
        avg_jerk=sum(m.mean_abs_jerk for m in metrics) / n,
        merge_behind_rate=frac("merged_behind"),
        seed=seed,
        config_hash=cfg_hash,
    )


EPISODE_CSV_FIELDS = [f.name for f in fields(EpisodeMetrics)]


def write_episode_csv(metrics, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=EPISODE_CSV_FIELDS)
        writer.writeheader()
        for m in metrics:
            writer.writerow(asdict(m))


def read_episode_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    return rows


def write_summary(summary: RunSummary, path):
    payload = {"schema_version": SCHEMA_VERSION}
    payload.update(asdict(summary))
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary(path) -> RunSummary:
    with open(path) as fh:
        payload = json.load(fh)
    payload.pop("schema_version", None)
    return RunSummary(**payload)


# -- training orchestration -------------------------------------------------------


TRAIN_LOG_FIELDS = ["env_step", "episode", "undiscounted_return",
                    "critic_loss", "actor_loss", "alpha", "entropy"]


def write_training_log(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRAIN_LOG_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def train_once(approach: str, cfg: WorkbenchConfig, steps: int, seed: int,
               out_dir) -> Policy:
    """One training run; writes checkpoint, training log, config snapshot."""
    os.makedirs(out_dir, exist_ok=True)
    factory = lambda s: make_env(approach, cfg, seed=s)
    agent, log = train(factory, cfg.sac, seed, steps)
    low, high = action_space(approach, cfg.phev)
    policy = Policy.from_agent(agent, approach, low, high, seed,
                               config_hash(cfg))
    save_policy(os.path.join(out_dir, "policy.ckpt"), policy)
    write_training_log(log, os.path.join(out_dir, "training_log.csv"))
    write_config_snapshot(cfg, os.path.join(out_dir, "config.json"))
    return policy


def selection_key(summary: RunSummary):
    """Best-of ordering: no collisions and stops first, then cost, then jerk."""
    return (summary.collision_rate > 0 or summary.stop_rate > 0,
            summary.collision_rate + summary.stop_rate,
            summary.avg_combined_cost,
            summary.avg_jerk)


def train_and_select(approach: str, cfg: WorkbenchConfig, steps: int,
                     seed: int, out_dir, repeats: int = 1,
                     select_episodes: int = 200) -> Policy:
    """Train `repeats` times and keep the policy with the best selection key.

    The chosen run's artifacts are re-emitted at the top of out_dir; each
    repeat keeps its own subdirectory.
    """
    os.makedirs(out_dir, exist_ok=True)
    if repeats <= 1:
        return train_once(approach, cfg, steps, seed, out_dir)
    candidates = []
    for r in range(repeats):
        run_dir = os.path.join(out_dir, f"run_{r}")
        policy = train_once(approach, cfg, steps, seed + r, run_dir)
        _, summary = evaluate(policy_action_fn(policy), approach, cfg,
                              select_episodes, seed=seed + 7777 + r)
        candidates.append((selection_key(summary), r, policy, summary))
    candidates.sort(key=lambda item: item[:2])
    _, best_r, best_policy, best_summary = candidates[0]
    save_policy(os.path.join(out_dir, "policy.ckpt"), best_policy)
    best_dir = os.path.join(out_dir, f"run_{best_r}")
    with open(os.path.join(best_dir, "training_log.csv")) as src, \
            open(os.path.join(out_dir, "training_log.csv"), "w") as dst:
        dst.write(src.read())
    write_config_snapshot(cfg, os.path.join(out_dir, "config.json"))
    with open(os.path.join(out_dir, "selection.json"), "w") as fh:
        json.dump({"schema_version": SCHEMA_VERSION, "selected_run": best_r,
                   "summary": asdict(best_summary)}, fh, indent=2)
        fh.write("\n")
    return best_policy


# -- comparison and tracing --------------------------------------------------------


COMPARE_FIELDS = ["approach", "n_episodes", "saturation_rate", "collision_rate",
                  "avg_fuel_cost", "avg_electricity_cost", "avg_combined_cost",
                  "avg_jerk", "merge_behind_rate"]


def compare(summaries) -> list:
    """Side-by-side table rows with percent deltas against seq_power."""
    if len(summaries) < 2:
        raise ValueError("need at least two summaries to compare")
    hashes = {s.config_hash for s in summaries}
    mixed = len(hashes) > 1
    baseline = next((s for s in summaries if s.approach == "seq_power"),
                    summaries[0])

    def delta(value, base):
        if base == 0:
            return ""
        return f"{100.0 * (value - base) / abs(base):+.0f}%"

    rows = []
    for s in summaries:
        row = {k: getattr(s, k) for k in COMPARE_FIELDS}
        row["combined_cost_delta"] = delta(s.avg_combined_cost,
                                           baseline.avg_combined_cost)
        row["jerk_delta"] = delta(s.avg_jerk, baseline.avg_jerk)
        row["config_mismatch"] = mixed
        rows.append(row)
    return rows


def write_compare_csv(rows, path):
    fieldnames = COMPARE_FIELDS + ["combined_cost_delta", "jerk_delta",
                                   "config_mismatch"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def compare_markdown(rows) -> str:
    headers = COMPARE_FIELDS + ["combined_cost_delta", "jerk_delta"]
    lines = ["| " + " | ".join(headers) + " |",
             "|" + "|".join("---" for _ in headers) + "|"]
    for row in rows:
        cells = []
        for h in headers:
            value = row[h]
            cells.append(f"{value:.4g}" if isinstance(value, float) else str(value))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


TRACE_FIELDS = ["step", "d_p2", "d_p1", "d", "d_f1", "d_f2", "v", "a", "j",
                "p_d", "p_eng", "p_mg", "p_fbk", "p_b", "soc", "cost",
                "saturated"]


def trace_episode(policy: Policy, cfg: WorkbenchConfig, seed: int, out_csv,
                  traffic_csv=None):
    """Log one deterministic episode: the full five-vehicle/powertrain panel."""
    env = make_env(policy.approach, cfg, seed=seed)
    tfh = open(traffic_csv, "w") if traffic_csv else None
    if tfh:
        tfh.write("step,vehicle_id,lane,d,v,a\n")

    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        writer.writeheader()

        def hook(step, obs, reward, info):
            raw = obs.values
            soc_shift = 1 if policy.approach == "coop" else 0
            split = info["split"]
            writer.writerow({
                "step": step,
                "d_p2": raw[0], "d_p1": raw[2], "d": raw[4],
                "d_f1": raw[7 + soc_shift], "d_f2": raw[9 + soc_shift],
                "v": raw[5], "a": raw[6], "j": info["jerk"],
                "p_d": split.p_d, "p_eng": split.p_eng, "p_mg": split.p_mg,
                "p_fbk": split.p_fbk, "p_b": split.p_b,
                "soc": info["soc"], "cost": info["cost"],
                "saturated": info["saturated"],
            })
            if tfh:
                for veh in env.traffic.vehicles:
                    tfh.write(f"{step},{veh.id},{veh.lane},{veh.d:.6f},"
                              f"{veh.v:.6f},{veh.a:.6f}\n")
                m = env.merger
                tfh.write(f"{step},{m.id},{m.lane},{m.d:.6f},{m.v:.6f},{m.a:.6f}\n")

        metrics = run_episode(env, policy_action_fn(policy), 0, seed,
                              step_hook=hook)
    if tfh:
        tfh.close()
    return metrics

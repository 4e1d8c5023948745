"""Reinforcement-learning environment for the merging + power-split task.

One environment instance wraps a traffic world, the powertrain model, and
a split resolver. Three action interfaces share the same episode dynamics
and rewards:

* ``coop``      - action [engine power, combined motor/brake power]
* ``seq_power`` - action [power demand], split by the blended CD rule
* ``seq_accel`` - action [acceleration demand], translated to power first

Observations are the five-vehicle state (two ahead, merger, two behind)
with distances, speeds, the merger's acceleration, and (coop only) the
battery SOC. Per-step rewards penalize off-midway merging, braking of the
first follower, jerk, and energy cost; termination pays -1 for stops and
collisions and +1 for reaching the end of the control zone.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional

import numpy as np

from phevmerge import phev, powersplit, traffic
from phevmerge.phev import BatteryState, PhevParams
from phevmerge.traffic import (
    A_MAX,
    A_MIN,
    EventTracker,
    IdmParams,
    RoadConfig,
    TrafficState,
    VehicleRecord,
    neighbors,
    step_traffic,
)

APPROACHES = ("coop", "seq_power", "seq_accel")

MERGER_ID = 0


class EpisodeFinished(RuntimeError):
    """step() was called on an episode that already terminated."""


@dataclass(frozen=True)
class RewardWeights:
    w_m: float = 0.015   # merge midway at the first preceding vehicle's speed
    w_b: float = 0.015   # braking of the first following vehicle
    w_j: float = 0.1     # jerk
    w_c: float = 0.005   # energy cost
    dv_max: float = 5.0  # m/s, largest tolerated speed gap to p1
    j0: float = 3.0      # m/s^3, comfort jerk threshold
    r_stop: float = -1.0
    r_collision: float = -1.0
    r_success: float = 1.0

    def validate(self):
        if min(self.w_m, self.w_b, self.w_j, self.w_c) < 0:
            raise ValueError("reward weights must be non-negative")
        return self


@dataclass(frozen=True)
class EpisodeConfig:
    v0_lo: float = 22.35      # m/s (50 mph)
    v0_hi: float = 26.82      # m/s (60 mph)
    soc0_lo: float = 0.3
    soc0_hi: float = 0.9
    warmup_s: float = 10.0    # main-road-only traffic before the merger appears
    max_episode_s: float = 60.0
    # gate for the midway reward: 'junction' starts shaping at junction
    # entry, 'merge_point' only once physically on the main lane
    r_m_gate: str = "junction"

    def validate(self):
        if not 0.0 <= self.soc0_lo <= self.soc0_hi <= 1.0:
            raise ValueError("soc range must be within [0, 1]")
        if not 0.0 < self.v0_lo <= self.v0_hi:
            raise ValueError("bad initial speed range")
        if self.r_m_gate not in ("junction", "merge_point"):
            raise ValueError("r_m_gate must be 'junction' or 'merge_point'")
        return self


@dataclass(frozen=True)
class RewardBreakdown:
    r_m: float
    r_b: float
    r_j: float
    r_c: float
    r_terminal: float

    @property
    def total(self) -> float:
        return self.r_m + self.r_b + self.r_j + self.r_c + self.r_terminal


@dataclass(frozen=True)
class Observation:
    """Raw physical entries plus the normalized mirror fed to networks.

    Ordering: [d_p2, v_p2, d_p1, v_p1, d, v, a, (soc,) d_f1, v_f1, d_f2, v_f2]
    with the soc entry present only for the co-optimization interface.
    """

    values: np.ndarray
    normalized: np.ndarray


def midway_ratio(dd_p1: float, dd_f1: float) -> float:
    """|dd_p1 - dd_f1| / (dd_p1 + dd_f1); 0 = exactly midway, 1 = touching."""
    total = dd_p1 + dd_f1
    if total <= 0.0:
        return 1.0  # degenerate: both gaps gone, collision fires anyway
    return abs(dd_p1 - dd_f1) / total


def reward_merge(v: float, v_p1: float, lam: float, w: RewardWeights,
                 merged: bool) -> float:
    if not merged:
        return 0.0
    return -w.w_m * (lam + abs(v_p1 - v) / w.dv_max)


def reward_follower_brake(a_f1: float, w: RewardWeights) -> float:
    if a_f1 >= 0.0:
        return 0.0
    return -w.w_b * abs(a_f1) / max(abs(A_MIN), A_MAX)


def reward_jerk(j: float, w: RewardWeights, j_max: float) -> float:
    if abs(j) <= w.j0:
        return 0.0
    return -w.w_j * (abs(j) - w.j0) / (j_max - w.j0)


def reward_energy(c: float, c_max: float, w: RewardWeights) -> float:
    """Co-optimization energy reward; positive while regenerating (c < 0)."""
    return -w.w_c * c / c_max


def reward_energy_seq(action_value: float, approach: str, params: PhevParams,
                      w: RewardWeights) -> float:
    """Energy shaping for the sequential interfaces, on the demand itself."""
    if approach == "seq_power":
        denom = max(abs(params.p_g_min + params.p_brk_min),
                    params.p_m_max + params.p_eng_max)
    elif approach == "seq_accel":
        denom = max(abs(A_MIN), A_MAX)
    else:
        raise ValueError(f"not a sequential approach: {approach}")
    return -w.w_c * action_value / denom


def action_space(approach: str, params: PhevParams):
    """(low, high) physical action bounds for the given interface."""
    if approach == "coop":
        low = [0.0, params.p_g_min + params.p_brk_min]
        high = [params.p_eng_max, params.p_m_max]
    elif approach == "seq_power":
        low = [params.p_g_min + params.p_brk_min]
        high = [params.p_m_max + params.p_eng_max]
    elif approach == "seq_accel":
        low, high = [A_MIN], [A_MAX]
    else:
        raise ValueError(f"unknown approach: {approach!r}")
    return np.asarray(low), np.asarray(high)


def obs_dim(approach: str) -> int:
    return 12 if approach == "coop" else 11


class MergingEnv:
    """Episode lifecycle, observation construction, and reward computation."""

    def __init__(self, approach: str = "coop",
                 params: Optional[PhevParams] = None,
                 road: Optional[RoadConfig] = None,
                 weights: Optional[RewardWeights] = None,
                 episode: Optional[EpisodeConfig] = None,
                 seed: int = 0):
        if approach not in APPROACHES:
            raise ValueError(f"unknown approach: {approach!r}")
        self.approach = approach
        self.params = (params or PhevParams()).validate()
        self.road = (road or RoadConfig()).validate()
        self.weights = (weights or RewardWeights()).validate()
        self.episode = (episode or EpisodeConfig()).validate()
        self._master = random.Random(seed)
        self.rng: random.Random = random.Random(seed)

        self.action_low, self.action_high = action_space(approach, self.params)
        self.action_dim = len(self.action_low)
        self.obs_dim = obs_dim(approach)
        self.c_max = phev.max_cost_per_step(self.params, self.road.dt)
        self.j_max = (A_MAX - A_MIN) / self.road.dt
        self.max_steps = int(round(self.episode.max_episode_s / self.road.dt))
        # normalization scales for the network-facing observation
        self._d_scale = self.road.sensing_radius
        self._v_scale = self.road.v_limit * self.road.desired_speed_hi
        self._a_scale = abs(A_MIN)

        self._done = True
        self.traffic: TrafficState = TrafficState()
        self.merger: Optional[VehicleRecord] = None
        self.battery = BatteryState(0.5)
        self.tracker: Optional[EventTracker] = None
        self.steps = 0

    # -- episode lifecycle -------------------------------------------------

    def reset(self, seed: Optional[int] = None) -> Observation:
        if seed is None:
            seed = self._master.getrandbits(63)
        self.rng = random.Random(seed)

        self.traffic = TrafficState()
        warmup_steps = int(round(self.episode.warmup_s / self.road.dt))
        for _ in range(warmup_steps):
            step_traffic(self.traffic, None, self.rng, self.road)

        v0 = self.rng.uniform(self.episode.v0_lo, self.episode.v0_hi)
        soc0 = self.rng.uniform(self.episode.soc0_lo, self.episode.soc0_hi)
        self.merger = VehicleRecord(
            id=MERGER_ID, lane="ramp", d=-self.road.control_zone_len, v=v0,
            a=0.0, desired_speed=self.road.v_limit, idm=IdmParams())
        self.battery = BatteryState(soc0)
        _, _, f1, _ = neighbors(self.traffic, self.merger, self.road)
        self.tracker = EventTracker(None if f1.virtual else f1.id)
        self.steps = 0
        self._done = False
        return self._observe()

    def step(self, action):
        """Apply one network action in [-1, 1]^n; returns (obs, reward, done, info)."""
        if self._done:
            raise EpisodeFinished("episode is over; call reset() first")
        m, road, params, w = self.merger, self.road, self.params, self.weights

        a_net = np.clip(np.asarray(action, dtype=float).reshape(-1), -1.0, 1.0)
        if a_net.shape[0] != self.action_dim:
            raise ValueError(
                f"action has {a_net.shape[0]} entries, expected {self.action_dim}")
        # plain floats from here on: the step math is scalar
        phys = [float(lo + 0.5 * (x + 1.0) * (hi - lo)) for x, lo, hi
                in zip(a_net, self.action_low, self.action_high)]

        if self.approach == "coop":
            res = powersplit.resolve_coop(phys[0], phys[1], params, v=m.v)
            demand_value = None
        elif self.approach == "seq_power":
            res = powersplit.blended_cd(phys[0], m.v, params)
            demand_value = phys[0]
        else:
            res = powersplit.resolve_accel(phys[0], m.v, params)
            demand_value = phys[0]

        battery, v_next, a_eff, fuel, cost = phev.step_powertrain(
            self.battery, res.split, m.v, road.dt, params)
        _, fuel_cost, elec_cost = phev.step_cost(
            res.split.p_eng, res.split.p_b, road.dt, params)

        # traffic reacts to the merger's pre-step state, everything then
        # integrates simultaneously
        step_traffic(self.traffic, m, self.rng, road)

        jerk = (a_eff - m.a) / road.dt
        m.d += m.v * road.dt
        m.v = v_next
        m.a = a_eff
        if m.lane == "ramp" and m.d >= 0.0:
            m.lane = "main"
        self.battery = battery
        self.steps += 1

        p2, p1, f1, f2 = neighbors(self.traffic, m, road)
        events = self.tracker.detect(self.traffic, m, road)
        timeout = (self.steps >= self.max_steps
                   and not (events["collision"] or events["stop"] or events["success"]))

        if self.episode.r_m_gate == "junction":
            merged = m.d >= -road.junction_half_len
        else:
            merged = m.d >= 0.0
        lam = midway_ratio(p1.d - m.d, m.d - f1.d)
        r_m = reward_merge(m.v, p1.v, lam, w, merged)
        r_b = reward_follower_brake(0.0 if f1.virtual else f1.a, w)
        r_j = reward_jerk(jerk, w, self.j_max)
        if self.approach == "coop":
            r_c = reward_energy(cost, self.c_max, w)
        else:
            r_c = reward_energy_seq(demand_value, self.approach, params, w)
        if events["collision"]:
            r_terminal = w.r_collision
        elif events["stop"]:
            r_terminal = w.r_stop
        elif events["success"]:
            r_terminal = w.r_success
        else:
            r_terminal = 0.0
        reward = RewardBreakdown(r_m, r_b, r_j, r_c, r_terminal)

        self._done = events["collision"] or events["stop"] or events["success"] or timeout
        info = {
            "saturated": res.saturated,
            "fuel": fuel,
            "fuel_cost": fuel_cost,
            "electricity_cost": elec_cost,
            "cost": cost,
            "jerk": jerk,
            "soc": battery.soc,
            "collision": events["collision"],
            "stop": events["stop"],
            "success": events["success"],
            "timeout": timeout,
            "merged_behind": events["merged_behind"],
            "merged": merged,
            "lambda": lam,
            "v_p1": p1.v,
            "a_f1": 0.0 if f1.virtual else f1.a,
            "demand": demand_value,
            "split": res.split,
            "achieved_accel": a_eff,
        }
        return self._observe((p2, p1, f1, f2)), reward, self._done, info

    # -- observations ------------------------------------------------------

    def _observe(self, neigh=None) -> Observation:
        m = self.merger
        if neigh is None:
            neigh = neighbors(self.traffic, m, self.road)
        p2, p1, f1, f2 = neigh
        entries = [p2.d, p2.v, p1.d, p1.v, m.d, m.v, m.a]
        if self.approach == "coop":
            entries.append(self.battery.soc)
        entries += [f1.d, f1.v, f2.d, f2.v]
        raw = np.asarray(entries, dtype=float)

        norm = raw.copy()
        d_idx = [0, 2, 4]
        v_idx = [1, 3, 5]
        tail = 8 if self.approach == "coop" else 7
        d_idx += [tail, tail + 2]
        v_idx += [tail + 1, tail + 3]
        norm[d_idx] /= self._d_scale
        norm[v_idx] /= self._v_scale
        norm[6] /= self._a_scale
        np.clip(norm, -1.0, 1.0, out=norm)
        return Observation(values=raw, normalized=norm)

    @property
    def done(self) -> bool:
        return self._done

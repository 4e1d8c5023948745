"""Microscopic simulation of a single-lane main road with an on-ramp merge.

Main-road vehicles follow the Intelligent Driver Model with heterogeneous
desired speeds and time headways, are spawned probabilistically upstream,
and have the right of way: they only react to the merging vehicle once it
enters the junction, through its projection onto the main lane at equal
distance to the merge point.

Coordinates are signed arc distances ``d`` to the merge point (negative
upstream). Two-dimensional geometry enters only through the merger's
circular sensing space, whose intersections with the main lane place the
virtual padding vehicles.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

# Normal main-road acceleration band; emergencies may brake down to -9.
A_MIN = -4.5
A_MAX = 2.6
A_EMERGENCY = -9.0


@dataclass(frozen=True)
class IdmParams:
    min_gap: float = 2.0            # jam distance s0, m
    time_headway: float = 1.3      # T, s (sampled per vehicle)
    accel_exponent: float = 4.0
    comfortable_decel: float = 2.5  # b, m/s^2
    max_accel: float = 2.6


@dataclass(frozen=True)
class RoadConfig:
    v_limit: float = 29.06           # m/s (65 mph)
    control_zone_len: float = 100.0  # each side of the merge point
    junction_half_len: float = 15.0
    sensing_radius: float = 200.0
    spawn_prob_per_s: float = 0.5
    dt: float = 0.1
    main_spawn_offset: float = 400.0  # spawn at d = -400
    exit_offset: float = 300.0        # despawn past d = +300
    ramp_angle_deg: float = 15.0
    collision_gap: float = 2.5
    desired_speed_sigma: float = 0.1
    desired_speed_lo: float = 0.85
    desired_speed_hi: float = 1.15
    headway_lo: float = 1.0
    headway_hi: float = 1.6
    stop_speed: float = 0.1
    stop_steps: int = 5
    # a spawn is queued, not dropped, while the entry gap is unsafe
    spawn_min_gap: float = 5.0

    def validate(self):
        for name in ("v_limit", "control_zone_len", "junction_half_len",
                     "sensing_radius", "dt", "main_spawn_offset", "exit_offset"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.spawn_prob_per_s * self.dt > 1.0:
            raise ValueError("spawn probability per step exceeds 1")
        return self


@dataclass
class VehicleRecord:
    """Kinematic state of one simulated vehicle."""

    id: int
    lane: str                 # 'main' or 'ramp'
    d: float                  # signed distance to the merge point, m
    v: float
    a: float
    desired_speed: float
    idm: IdmParams
    virtual: bool = False


def idm_accel(follower: VehicleRecord, leader_gap: Optional[float],
              leader_v: Optional[float]) -> float:
    """IDM acceleration of `follower`, free-road when no leader is given.

    Demands beyond the comfortable band engage the emergency floor of
    -9 m/s^2; a vanished gap returns the floor directly.
    """
    if leader_gap is not None and leader_gap <= 0.0:
        return A_EMERGENCY
    p = follower.idm
    v = follower.v
    free = 1.0 - (v / follower.desired_speed) ** p.accel_exponent
    if leader_gap is None:
        raw = p.max_accel * free
    else:
        dv = v - leader_v
        s_star = (p.min_gap + v * p.time_headway
                  + v * dv / (2.0 * math.sqrt(p.max_accel * p.comfortable_decel)))
        raw = p.max_accel * (free - (s_star / leader_gap) ** 2)
    if raw < A_MIN:
        return raw if raw > A_EMERGENCY else A_EMERGENCY
    return raw if raw < A_MAX else A_MAX


@dataclass
class TrafficState:
    """Main-road world: vehicles sorted by decreasing d, plus the entry queue."""

    vehicles: list = field(default_factory=list)
    pending: list = field(default_factory=list)
    next_id: int = 1
    step_count: int = 0


def _draw_vehicle(rng: random.Random, cfg: RoadConfig, vid: int) -> VehicleRecord:
    alpha = min(max(rng.gauss(1.0, cfg.desired_speed_sigma),
                    cfg.desired_speed_lo), cfg.desired_speed_hi)
    idm = IdmParams(time_headway=rng.uniform(cfg.headway_lo, cfg.headway_hi))
    desired = alpha * cfg.v_limit
    return VehicleRecord(id=vid, lane="main", d=-cfg.main_spawn_offset,
                         v=desired, a=0.0, desired_speed=desired, idm=idm)


def _try_insert(state: TrafficState, cfg: RoadConfig) -> Optional[VehicleRecord]:
    """Insert the oldest queued vehicle if the entry gap allows it."""
    if not state.pending:
        return None
    cand = state.pending[0]
    pred = state.vehicles[-1] if state.vehicles else None
    if pred is not None:
        gap = pred.d + cfg.main_spawn_offset
        # enter no faster than the gap supports
        v0 = min(cand.desired_speed,
                 max(0.0, (gap - cand.idm.min_gap) / cand.idm.time_headway))
        if gap < max(cand.idm.min_gap + v0 * cand.idm.time_headway,
                     cfg.spawn_min_gap):
            return None
        cand.v = v0
    state.pending.pop(0)
    state.vehicles.append(cand)
    return cand


def spawn_main_vehicle(rng: random.Random, cfg: RoadConfig,
                       state: TrafficState) -> Optional[VehicleRecord]:
    """One per-step spawn attempt; unsafe entries wait in the queue."""
    if rng.random() < cfg.spawn_prob_per_s * cfg.dt:
        state.pending.append(_draw_vehicle(rng, cfg, state.next_id))
        state.next_id += 1
    return _try_insert(state, cfg)


def project_ramp_vehicle(merger: VehicleRecord,
                         cfg: RoadConfig) -> Optional[VehicleRecord]:
    """Phantom image of an in-junction ramp vehicle on the main lane.

    Outside the junction the main road ignores the merger entirely.
    """
    if merger.lane != "ramp":
        return None
    if merger.d < 0.0 and -merger.d <= cfg.junction_half_len:
        return VehicleRecord(id=merger.id, lane="main", d=merger.d, v=merger.v,
                             a=merger.a, desired_speed=merger.desired_speed,
                             idm=merger.idm, virtual=True)
    return None


def step_traffic(state: TrafficState, merger: Optional[VehicleRecord],
                 rng: random.Random, cfg: RoadConfig):
    """Advance all main-road vehicles by one step of dt.

    Accelerations are computed against the pre-step state (including the
    merger or its projection where applicable), then integrated together.
    """
    participant = None
    if merger is not None:
        participant = merger if merger.lane == "main" else \
            project_ramp_vehicle(merger, cfg)

    mains = state.vehicles
    accels = []
    for i, veh in enumerate(mains):
        if i:
            lead_d, lead_v = mains[i - 1].d, mains[i - 1].v
        else:
            lead_d = lead_v = None
        if participant is not None and participant.d >= veh.d:
            if lead_d is None or participant.d < lead_d:
                lead_d, lead_v = participant.d, participant.v
        gap = None if lead_d is None else lead_d - veh.d
        accels.append(idm_accel(veh, gap, lead_v))

    dt = cfg.dt
    for veh, a in zip(mains, accels):
        veh.d += veh.v * dt
        v_next = max(0.0, veh.v + a * dt)
        veh.a = (v_next - veh.v) / dt
        veh.v = v_next

    while mains and mains[0].d > cfg.exit_offset:
        mains.pop(0)

    spawn_main_vehicle(rng, cfg, state)
    state.step_count += 1
    return state


def _sensing_window(merger: VehicleRecord, cfg: RoadConfig):
    """Main-lane interval cut out by the merger's circular sensing space."""
    if merger.lane == "ramp" and merger.d < 0.0:
        phi = math.radians(cfg.ramp_angle_deg)
        x = merger.d * math.cos(phi)
        y = merger.d * math.sin(phi)
    else:
        x, y = merger.d, 0.0
    half = math.sqrt(cfg.sensing_radius ** 2 - y * y)
    return x - half, x + half


def _virtual(d: float, cfg: RoadConfig) -> VehicleRecord:
    return VehicleRecord(id=-1, lane="main", d=d, v=cfg.v_limit, a=0.0,
                         desired_speed=cfg.v_limit, idm=IdmParams(),
                         virtual=True)


def neighbors(state: TrafficState, merger: VehicleRecord, cfg: RoadConfig):
    """(p2, p1, f1, f2): two nearest sensed vehicles ahead of and behind.

    Missing slots are virtual vehicles pinned at the sensing boundary with
    the speed limit and zero acceleration.
    """
    lo, hi = _sensing_window(merger, cfg)
    ahead = [v for v in state.vehicles if merger.d <= v.d <= hi and v.id != merger.id]
    behind = [v for v in state.vehicles if lo <= v.d < merger.d and v.id != merger.id]
    # state.vehicles is sorted by decreasing d
    p1 = ahead[-1] if len(ahead) >= 1 else _virtual(hi, cfg)
    p2 = ahead[-2] if len(ahead) >= 2 else _virtual(hi, cfg)
    f1 = behind[0] if len(behind) >= 1 else _virtual(lo, cfg)
    f2 = behind[1] if len(behind) >= 2 else _virtual(lo, cfg)
    return p2, p1, f1, f2


class EventTracker:
    """Per-episode detector for collision, stop, success, and merge-behind."""

    def __init__(self, initial_f1_id: Optional[int]):
        self.initial_f1_id = initial_f1_id
        self.low_speed_steps = 0
        self.merged_behind = False
        self._behind_checked = False

    def detect(self, state: TrafficState, merger: VehicleRecord,
               cfg: RoadConfig) -> dict:
        interacting = merger.lane == "main" or abs(merger.d) <= cfg.junction_half_len
        collision = False
        if interacting:
            for veh in state.vehicles:
                if abs(veh.d - merger.d) < cfg.collision_gap:
                    collision = True
                    break

        if merger.v < cfg.stop_speed:
            self.low_speed_steps += 1
        else:
            self.low_speed_steps = 0
        stop = self.low_speed_steps >= cfg.stop_steps

        success = merger.d >= cfg.control_zone_len

        if not self._behind_checked and merger.d >= cfg.junction_half_len:
            self._behind_checked = True
            if self.initial_f1_id is not None:
                for veh in state.vehicles:
                    if veh.id == self.initial_f1_id:
                        self.merged_behind = veh.d > merger.d
                        break

        return {"collision": collision, "stop": stop, "success": success,
                "merged_behind": self.merged_behind}


def write_trajectory_row(fh, step: int, veh: VehicleRecord):
    """Append one (step, vehicle_id, lane, d, v, a) CSV row."""
    fh.write(f"{step},{veh.id},{veh.lane},{veh.d:.6f},{veh.v:.6f},{veh.a:.6f}\n")

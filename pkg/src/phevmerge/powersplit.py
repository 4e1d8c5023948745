"""Resolution of high-level commands into constraint-satisfying power splits.

Three entry points, one per control interface:

* :func:`resolve_coop` - the policy commands engine power and a combined
  motor/brake channel directly; regenerative braking is used before the
  friction brake.
* :func:`blended_cd` - charge-depleting rule for a power demand: electric
  drive whenever the battery alone can cover it, engine otherwise, battery
  topping up what the engine cannot supply.
* :func:`resolve_accel` - an acceleration demand, translated to a power
  demand through the vehicle dynamics and handed to the blended rule.

All clipping happens in the power domain. The motor-generator is limited
both by its own rating and by what the battery can source or sink, so the
battery limits are inverted through the motor/generator efficiencies and
intersected with the machine limits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from phevmerge.phev import (
    PhevParams,
    PowerSplit,
    demand_for_accel,
    longitudinal_accel,
)

# Demands closer than this (W) to the achievable power do not count as
# saturated; keeps the flag robust to float rounding.
SATURATION_TOL = 1e-9


@dataclass(frozen=True)
class SplitResolution:
    """A resolved split plus whether the request was achievable."""

    split: PowerSplit
    saturated: bool
    achieved_accel: Optional[float]


def mg_limits(params: PhevParams):
    """(lower, upper) motor-generator power bounds honoring the battery.

    Upper: motoring at p_mg draws p_mg/eta_m + p_aux from the battery.
    Lower: recuperating at p_mg pushes p_mg*eta_g + p_aux into it.
    """
    upper = min(params.p_m_max, (params.p_b_max - params.p_aux) * params.eta_m)
    lower = max(params.p_g_min, (params.p_b_min - params.p_aux) / params.eta_g)
    return min(lower, 0.0), max(upper, 0.0)


def _brake_split(p_cb: float, params: PhevParams):
    """Split a non-positive combined command: generator first, friction after."""
    lower, _ = mg_limits(params)
    p_mg = max(p_cb, lower)
    p_fbk = max(p_cb - p_mg, params.p_brk_min)
    return p_mg, p_fbk


def resolve_coop(p_eng: float, p_cb: float, params: PhevParams,
                 v: Optional[float] = None) -> SplitResolution:
    """Resolve the direct power-split action (engine, combined motor+brake).

    The caller maps policy outputs into the component-limit box, so the box
    itself is the action space and the result is never flagged saturated;
    battery-limit clipping of the motor-generator is part of the action
    semantics.
    """
    p_eng = min(max(p_eng, 0.0), params.p_eng_max)
    lo_box = params.p_g_min + params.p_brk_min
    p_cb = min(max(p_cb, lo_box), params.p_m_max)
    if p_cb >= 0.0:
        _, upper = mg_limits(params)
        p_mg, p_fbk = min(p_cb, upper), 0.0
    else:
        p_mg, p_fbk = _brake_split(p_cb, params)
    split = PowerSplit.from_components(p_eng, p_mg, p_fbk, params)
    accel = longitudinal_accel(v, split.p_d, 0.0, params) if v is not None else None
    return SplitResolution(split, saturated=False, achieved_accel=accel)


def blended_cd(p_d: float, v: float, params: PhevParams) -> SplitResolution:
    """Blended charge-depleting split of a signed power demand.

    Electric drive below the battery-only capability, engine above it with
    the motor making up the shortfall. Demands beyond the combined limits
    pin the split at the limits and set the saturation flag.
    """
    lower, upper = mg_limits(params)
    if p_d <= 0.0:
        p_mg, p_fbk = _brake_split(p_d, params)
        p_eng = 0.0
    elif p_d <= upper:
        p_eng, p_mg, p_fbk = 0.0, p_d, 0.0
    else:
        p_eng = min(p_d, params.p_eng_max)
        p_mg = min(p_d - p_eng, upper)
        p_fbk = 0.0
    split = PowerSplit.from_components(p_eng, p_mg, p_fbk, params)
    saturated = abs(split.p_d - p_d) > SATURATION_TOL
    accel = longitudinal_accel(v, split.p_d, 0.0, params)
    return SplitResolution(split, saturated, accel)


def resolve_accel(a_d: float, v: float, params: PhevParams) -> SplitResolution:
    """Resolve an acceleration demand via the vehicle dynamics inverse."""
    p_d = demand_for_accel(v, a_d, 0.0, params)
    res = blended_cd(p_d, v, params)
    return res

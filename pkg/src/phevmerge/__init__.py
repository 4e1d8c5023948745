"""Workbench for automated on-ramp merging of a power-split plug-in hybrid.

The package couples a control-oriented powertrain model of a 2015 Toyota
Prius Plug-In with a microscopic single-lane merging simulation and a
soft actor-critic learner, and provides an evaluation harness that
compares direct power-split control against two hierarchical (demand
first, split second) alternatives under identical traffic.
"""

from phevmerge.phev import (
    BatteryState,
    PhevParams,
    PowerSplit,
    battery_power,
    demand_for_accel,
    fuel_rate,
    longitudinal_accel,
    max_cost_per_step,
    soc_derivative,
    step_powertrain,
)
from phevmerge.powersplit import SplitResolution, blended_cd, resolve_accel, resolve_coop
from phevmerge.traffic import IdmParams, RoadConfig, VehicleRecord
from phevmerge.env import EpisodeConfig, MergingEnv, Observation, RewardWeights
from phevmerge.sac import SacConfig, SacAgent, load_policy, save_policy, train

__version__ = "0.1.0"

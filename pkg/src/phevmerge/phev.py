"""Control-oriented model of the 2015 Toyota Prius Plug-In powertrain.

Everything is expressed in the power domain: an engine, a combined
motor-generator, a friction brake, and a battery behind an equivalent
circuit. The model provides the power balance, battery state-of-charge
dynamics, fuel rate, longitudinal dynamics, and the monetary energy cost
of one control step.

The numeric defaults in :class:`PhevParams` are assembled from public
2015 Prius Plug-In specifications (1530 kg curb weight, 73 kW engine,
60 kW traction motor, 4.4 kWh / 207 V pack). They are stand-ins for the
proprietary calibration of the production vehicle; nothing in the test
suite treats them as ground truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace

# Eq-of-motion velocity floor: merging speeds are >= 22 m/s, the floor only
# guards degenerate low-speed queries against division by zero.
V_FLOOR = 0.1

JOULES_PER_KWH = 3.6e6


class ConstraintError(ValueError):
    """An input violated a component power limit or a model precondition."""


class BatterySaturationError(ConstraintError):
    """Requested battery power exceeds what the equivalent circuit can deliver.

    Carries ``max_feasible`` = V_oc^2 / (4 R_b), the peak deliverable power
    at the queried state of charge.
    """

    def __init__(self, requested: float, max_feasible: float):
        self.requested = requested
        self.max_feasible = max_feasible
        super().__init__(
            f"battery cannot deliver {requested:.1f} W "
            f"(max feasible {max_feasible:.1f} W)"
        )


@dataclass(frozen=True)
class PhevParams:
    """All powertrain, battery, vehicle, and price constants in SI units."""

    # efficiencies
    eta_m: float = 0.90    # motor (combined MG propelling)
    eta_g: float = 0.90    # generator (combined MG recuperating)
    eta_t: float = 0.90    # transmission
    eta_b: float = 0.95    # battery
    eta_chr: float = 0.92  # external charger
    p_aux: float = 300.0   # accessory load, W (no air conditioning)

    # fuel map: linear in engine power, engine assumed at its optimal line
    a1: float = 6.0e-8     # kg/s per W  (~225 g/kWh)
    a2: float = 1.5e-4     # kg/s intercept

    # open-circuit voltage / internal resistance quadratics in SOC.
    # Constant-over-SOC fallback: nominal pack voltage and resistance only.
    b1: float = 0.0
    b2: float = 0.0
    b3: float = 207.0      # V
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.12       # ohm

    q_max: float = 76500.0  # coulombs (4.4 kWh / 207 V)

    # vehicle body
    mass: float = 1530.0
    cd: float = 0.25
    rho: float = 1.20
    area: float = 2.25
    mu: float = 0.008       # rolling, dimensionless
    mu2: float = 1.2e-4     # rolling, s/m
    gravity: float = 9.81

    # component power limits, W. The friction channel models only the
    # blended service-brake authority; together with the generator it
    # covers -4.5 m/s^2 up to ~22 m/s, so deep braking demands at highway
    # speed saturate (the battery, by contrast, never binds first).
    p_eng_max: float = 73000.0
    p_brk_min: float = -90000.0
    p_g_min: float = -42000.0
    p_m_max: float = 60000.0
    p_b_min: float = -40000.0
    p_b_max: float = 70000.0

    # energy prices (2019 US national averages)
    k_f: float = 0.93       # USD/kg fuel
    k_e: float = 0.13       # USD/kWh electricity

    @property
    def k_e_per_j(self) -> float:
        """Electricity price converted once to USD/J for bit-exact costs."""
        return self.k_e / JOULES_PER_KWH

    def validate(self):
        for name in ("eta_m", "eta_g", "eta_t", "eta_b", "eta_chr"):
            eta = getattr(self, name)
            if not 0.0 < eta <= 1.0:
                raise ConstraintError(f"{name} must be in (0, 1], got {eta}")
        if self.q_max <= 0:
            raise ConstraintError(f"q_max must be positive, got {self.q_max}")
        if self.mass <= 0:
            raise ConstraintError(f"mass must be positive, got {self.mass}")
        if not self.p_eng_max >= 0 >= self.p_brk_min:
            raise ConstraintError("engine/brake limits must straddle zero")
        if not self.p_m_max >= 0 >= self.p_g_min:
            raise ConstraintError("motor/generator limits must straddle zero")
        if not self.p_b_max >= 0 >= self.p_b_min:
            raise ConstraintError("battery limits must straddle zero")
        for soc in (0.0, 0.25, 0.5, 0.75, 1.0):
            if open_circuit_voltage(soc, self) <= 0:
                raise ConstraintError(f"V_oc(soc={soc}) must be positive")
            if internal_resistance(soc, self) <= 0:
                raise ConstraintError(f"R_b(soc={soc}) must be positive")
        return self


def load_params(path) -> PhevParams:
    """Read a flat JSON document holding every PhevParams field (SI units).

    Unknown and missing keys are rejected by name.
    """
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConstraintError("parameter file must hold a JSON object")
    known = {f.name for f in fields(PhevParams)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConstraintError(f"unknown parameter keys: {', '.join(unknown)}")
    missing = sorted(known - set(raw))
    if missing:
        raise ConstraintError(f"missing parameter keys: {', '.join(missing)}")
    bad = sorted(k for k, v in raw.items() if not isinstance(v, (int, float)))
    if bad:
        raise ConstraintError(f"non-numeric parameter values: {', '.join(bad)}")
    return PhevParams(**{k: float(v) for k, v in raw.items()}).validate()


def dump_params(params: PhevParams, path):
    with open(path, "w") as fh:
        json.dump({f.name: getattr(params, f.name) for f in fields(PhevParams)},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class PowerSplit:
    """One step's resolved component powers, W. p_d = p_eng + p_mg + p_fbk."""

    p_d: float
    p_eng: float
    p_mg: float
    p_fbk: float
    p_b: float

    @classmethod
    def from_components(cls, p_eng: float, p_mg: float, p_fbk: float,
                        params: PhevParams) -> "PowerSplit":
        return cls(p_d=p_eng + p_mg + p_fbk, p_eng=p_eng, p_mg=p_mg,
                   p_fbk=p_fbk, p_b=battery_power(p_mg, params))

    def validate(self, params: PhevParams, tol: float = 1e-6) -> "PowerSplit":
        """Independent checker for the power balance and all component limits."""
        if abs(self.p_d - (self.p_eng + self.p_mg + self.p_fbk)) > tol:
            raise ConstraintError("power balance violated: p_d != sum of components")
        if not -tol <= self.p_eng <= params.p_eng_max + tol:
            raise ConstraintError(f"engine power {self.p_eng} outside [0, {params.p_eng_max}]")
        if not params.p_brk_min - tol <= self.p_fbk <= tol:
            raise ConstraintError(f"friction brake power {self.p_fbk} outside [{params.p_brk_min}, 0]")
        if not params.p_g_min - tol <= self.p_mg <= params.p_m_max + tol:
            raise ConstraintError(f"motor-generator power {self.p_mg} outside limits")
        if not params.p_b_min - tol <= self.p_b <= params.p_b_max + tol:
            raise ConstraintError(f"battery power {self.p_b} outside limits")
        if abs(self.p_b - battery_power(self.p_mg, params)) > tol:
            raise ConstraintError("battery power inconsistent with motor-generator power")
        return self


def zero_split(params: PhevParams) -> PowerSplit:
    """All-zero component powers (battery still carries the accessory load)."""
    return PowerSplit.from_components(0.0, 0.0, 0.0, params)


@dataclass(frozen=True)
class BatteryState:
    """State of charge in [0, 1] plus a diagnostic count of clamp events."""

    soc: float
    clamp_events: int = 0


def battery_power(p_mg: float, params: PhevParams) -> float:
    """Battery power implied by the combined motor-generator power.

    Propelling draws p_mg/eta_m, recuperating stores p_mg*eta_g; the
    accessory load is always on the battery side.
    """
    if not params.p_g_min <= p_mg <= params.p_m_max:
        raise ConstraintError(
            f"p_mg={p_mg:.1f} W outside [{params.p_g_min:.1f}, {params.p_m_max:.1f}]"
        )
    if p_mg >= 0.0:
        return p_mg / params.eta_m + params.p_aux
    return p_mg * params.eta_g + params.p_aux


def fuel_rate(p_eng: float, params: PhevParams) -> float:
    """Fuel mass flow, kg/s. Linear in engine power; exactly zero when off."""
    if p_eng < 0.0 or p_eng > params.p_eng_max:
        raise ConstraintError(
            f"p_eng={p_eng:.1f} W outside [0, {params.p_eng_max:.1f}]"
        )
    if p_eng == 0.0:
        return 0.0
    return params.a1 * p_eng + params.a2


def open_circuit_voltage(soc: float, params: PhevParams) -> float:
    return (params.b1 * soc + params.b2) * soc + params.b3


def internal_resistance(soc: float, params: PhevParams) -> float:
    return (params.c1 * soc + params.c2) * soc + params.c3


def soc_derivative(soc: float, p_b: float, params: PhevParams) -> float:
    """d(SOC)/dt for a battery delivering p_b through its internal resistance.

    The battery current is the smaller root of R_b I^2 - V_oc I + p_b = 0,
    so discharge (p_b > 0) drains and recuperation (p_b < 0) charges.
    """
    v_oc = open_circuit_voltage(soc, params)
    r_b = internal_resistance(soc, params)
    disc = v_oc * v_oc - 4.0 * r_b * p_b
    if disc < 0.0:
        raise BatterySaturationError(p_b, v_oc * v_oc / (4.0 * r_b))
    return -(v_oc - math.sqrt(disc)) / (2.0 * r_b * params.q_max)


def _resistance_force(v: float, theta: float, params: PhevParams) -> float:
    """Aerodynamic drag + rolling resistance + grade force, N."""
    m_g = params.mass * params.gravity
    return (0.5 * params.cd * params.rho * params.area * v * v
            + (params.mu + params.mu2 * v) * m_g * math.cos(theta)
            + m_g * math.sin(theta))


def longitudinal_accel(v: float, p_d: float, theta: float,
                       params: PhevParams) -> float:
    """Acceleration produced by power demand p_d at speed v on grade theta.

    Positive demand reaches the wheels through the transmission loss,
    negative demand (braking) is amplified by it.
    """
    v_eff = v if v > V_FLOOR else V_FLOOR
    tractive = p_d * params.eta_t if p_d >= 0.0 else p_d / params.eta_t
    return (tractive / v_eff - _resistance_force(v, theta, params)) / params.mass


def demand_for_accel(v: float, a_d: float, theta: float,
                     params: PhevParams) -> float:
    """Inverse of longitudinal_accel: the p_d that yields acceleration a_d."""
    v_eff = v if v > V_FLOOR else V_FLOOR
    p_raw = (params.mass * a_d + _resistance_force(v, theta, params)) * v_eff
    return p_raw / params.eta_t if p_raw >= 0.0 else p_raw * params.eta_t


def step_cost(p_eng: float, p_b: float, dt: float, params: PhevParams):
    """(fuel_kg, fuel_cost, electricity_cost) of holding the powers for dt."""
    mdot = fuel_rate(p_eng, params)
    fuel_cost = params.k_f * mdot * dt
    elec_cost = params.k_e_per_j * p_b / (params.eta_b * params.eta_chr) * dt
    return mdot * dt, fuel_cost, elec_cost


def step_powertrain(state: BatteryState, split: PowerSplit, v: float,
                    dt: float, params: PhevParams):
    """Advance SOC and speed by explicit Euler over one step.

    Returns (new BatteryState, v', achieved accel, fuel kg, cost USD).
    The achieved acceleration is (v' - v)/dt so that standstill clamping
    stays kinematically consistent.
    """
    if dt <= 0.0:
        raise ConstraintError(f"dt must be positive, got {dt}")
    soc_dot = soc_derivative(state.soc, split.p_b, params)
    soc_raw = state.soc + soc_dot * dt
    soc = min(1.0, max(0.0, soc_raw))
    clamps = state.clamp_events + (soc != soc_raw)

    a = longitudinal_accel(v, split.p_d, 0.0, params)
    v_next = max(0.0, v + a * dt)
    a_eff = (v_next - v) / dt

    fuel, fuel_cost, elec_cost = step_cost(split.p_eng, split.p_b, dt, params)
    return BatteryState(soc, clamps), v_next, a_eff, fuel, fuel_cost + elec_cost


def max_cost_per_step(params: PhevParams, dt: float) -> float:
    """Energy cost of one step with engine and battery both at maximum."""
    mdot = params.a1 * params.p_eng_max + params.a2 if params.p_eng_max > 0 else 0.0
    rate = (params.k_f * mdot
            + params.k_e_per_j * params.p_b_max / (params.eta_b * params.eta_chr))
    return rate * dt


def with_overrides(params: PhevParams, **kw) -> PhevParams:
    """Copy with field overrides, revalidated."""
    return replace(params, **kw).validate()

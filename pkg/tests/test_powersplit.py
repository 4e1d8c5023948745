"""Split arbitration: co-op channel rule, blended CD, saturation flags."""

import random

import pytest

from phevmerge.phev import PhevParams, battery_power, demand_for_accel
from phevmerge.powersplit import blended_cd, mg_limits, resolve_accel, resolve_coop


class TestResolveCoop:
    def test_positive_combined_power_uses_motor_only(self, params):
        res = resolve_coop(0.0, 8000.0, params)
        assert res.split.p_mg == 8000.0
        assert res.split.p_fbk == 0.0
        assert not res.saturated
        res.split.validate(params)

    def test_braking_prefers_generator(self):
        # generator limit binds before the battery: friction takes the rest
        p = PhevParams(p_g_min=-30000.0, p_b_min=-100000.0).validate()
        res = resolve_coop(0.0, -50000.0, p)
        assert res.split.p_mg == -30000.0
        assert res.split.p_fbk == -20000.0
        res.split.validate(p)

    def test_zero_action(self, params):
        res = resolve_coop(0.0, 0.0, params)
        assert res.split.p_eng == res.split.p_mg == res.split.p_fbk == 0.0
        assert res.split.p_d == 0.0

    def test_battery_discharge_limit_clips_motor(self, tight_battery):
        res = resolve_coop(0.0, tight_battery.p_m_max, tight_battery)
        assert res.split.p_b == pytest.approx(tight_battery.p_b_max)
        assert res.split.p_mg < tight_battery.p_m_max
        assert not res.saturated
        res.split.validate(tight_battery)

    def test_battery_charge_limit_shifts_to_friction(self, tight_battery):
        res = resolve_coop(0.0, -30000.0, tight_battery)
        assert res.split.p_b == pytest.approx(tight_battery.p_b_min)
        assert res.split.p_fbk < 0.0
        res.split.validate(tight_battery)

    def test_never_saturated_and_always_valid(self, params, tight_battery):
        rng = random.Random(11)
        for p in (params, tight_battery):
            lo = p.p_g_min + p.p_brk_min
            for _ in range(500):
                res = resolve_coop(rng.uniform(0, p.p_eng_max),
                                   rng.uniform(lo, p.p_m_max), p,
                                   v=rng.uniform(1.0, 35.0))
                assert not res.saturated
                res.split.validate(p)

    def test_regeneration_priority(self, params, tight_battery):
        # whenever friction brakes act, the generator is pinned at its
        # effective (battery-coupled) limit
        rng = random.Random(12)
        for p in (params, tight_battery):
            lower, _ = mg_limits(p)
            lo = p.p_g_min + p.p_brk_min
            for _ in range(500):
                res = resolve_coop(0.0, rng.uniform(lo, 0.0), p)
                if res.split.p_fbk < 0.0:
                    assert res.split.p_mg == pytest.approx(lower)


class TestBlendedCd:
    def test_electric_drive_region(self, params):
        res = blended_cd(5000.0, 25.0, params)
        assert res.split.p_eng == 0.0
        assert res.split.p_mg == 5000.0
        assert not res.saturated

    def test_engine_supplies_all_above_capability(self, params):
        _, upper = mg_limits(params)
        res = blended_cd(upper + 1000.0, 25.0, params)
        assert res.split.p_eng == pytest.approx(upper + 1000.0)
        assert res.split.p_mg == 0.0

    def test_battery_tops_up_engine(self, params):
        p_d = params.p_eng_max + 10000.0
        res = blended_cd(p_d, 25.0, params)
        assert res.split.p_eng == params.p_eng_max
        assert res.split.p_mg == pytest.approx(10000.0)
        assert not res.saturated

    def test_saturation_pins_at_limits(self):
        p = PhevParams(p_b_max=150000.0).validate()  # battery non-binding
        p_d = p.p_eng_max + p.p_m_max + 1000.0
        res = blended_cd(p_d, 25.0, p)
        assert res.saturated
        assert res.split.p_eng == p.p_eng_max
        assert res.split.p_mg == p.p_m_max
        res.split.validate(p)

    def test_zero_demand(self, params):
        res = blended_cd(0.0, 25.0, params)
        assert res.split.p_d == 0.0
        assert not res.saturated

    def test_braking_beyond_all_limits_saturates(self, params):
        lo = params.p_g_min + params.p_brk_min
        res = blended_cd(lo - 5000.0, 25.0, params)
        assert res.saturated
        assert res.split.p_fbk == params.p_brk_min
        res.split.validate(params)

    def test_saturation_soundness(self, params, tight_battery):
        # flag set iff the achieved demand differs from the request
        rng = random.Random(13)
        for p in (params, tight_battery):
            for _ in range(800):
                p_d = rng.uniform(-260000.0, 200000.0)
                res = blended_cd(p_d, 25.0, p)
                res.split.validate(p)
                if res.saturated:
                    assert abs(res.split.p_d) < abs(p_d)
                else:
                    assert res.split.p_d == pytest.approx(p_d, abs=1e-9)

    def test_engine_off_in_battery_region(self, params, tight_battery):
        rng = random.Random(14)
        for p in (params, tight_battery):
            _, upper = mg_limits(p)
            for _ in range(300):
                res = blended_cd(rng.uniform(0.0, upper), 25.0, p)
                assert res.split.p_eng == 0.0


class TestResolveAccel:
    def test_accel_achieved_when_unsaturated(self, params):
        rng = random.Random(15)
        for _ in range(400):
            v = rng.uniform(5.0, 33.0)
            a_d = rng.uniform(-4.5, 2.6)
            res = resolve_accel(a_d, v, params)
            if not res.saturated:
                assert res.achieved_accel == pytest.approx(a_d, abs=1e-9)

    def test_small_demand_is_electric(self, params):
        res = resolve_accel(0.0, 25.0, params)
        assert res.split.p_eng == 0.0

    def test_saturated_high_speed_demand(self):
        p = PhevParams(p_eng_max=30000.0, p_m_max=20000.0,
                       p_b_max=30000.0).validate()
        res = resolve_accel(2.6, 29.0, p)
        assert res.saturated
        assert res.achieved_accel < 2.6

    def test_power_equivalence(self, params):
        # the resolved split carries exactly the demand computed from the
        # dynamics inverse whenever achievable
        res = resolve_accel(1.5, 28.0, params)
        assert res.split.p_d == pytest.approx(
            demand_for_accel(28.0, 1.5, 0.0, params), abs=1e-9)


class TestBatteryCoupling:
    def test_upper_bound_inverts_eq_through_motor(self, tight_battery):
        lower, upper = mg_limits(tight_battery)
        assert battery_power(upper, tight_battery) == \
            pytest.approx(tight_battery.p_b_max)
        assert battery_power(lower, tight_battery) == \
            pytest.approx(tight_battery.p_b_min)

    def test_machine_limits_when_battery_generous(self, params):
        lower, upper = mg_limits(params)
        assert upper == params.p_m_max
        assert lower == params.p_g_min

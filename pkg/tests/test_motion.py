import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from devi.motion import (
    JOINT_SPECS,
    Joint,
    OutOfRange,
    PointAt,
    Rest,
    Wave,
    head_target,
    move_duration,
    plan_gesture,
)


def recompute_total(plan):
    # Independent duration oracle: per-step max command duration plus dwell.
    total = 0.0
    for step in plan.steps:
        longest = 0.0
        for cmd in step.commands:
            longest = max(longest, cmd.expected_duration_s)
        total += longest + step.dwell_s
    return total


class TestHeadTarget:
    def test_center(self):
        assert head_target(0.0).target_deg == 85.0

    def test_region_three(self):
        cmd = head_target(45.0)
        assert cmd.target_deg == 130.0
        assert not cmd.clamped

    def test_clamps_beyond_range(self):
        cmd = head_target(120.0)
        assert cmd.target_deg == 170.0
        assert cmd.clamped
        low = head_target(-120.0)
        assert low.target_deg == 0.0
        assert low.clamped

    def test_duration_from_current(self):
        cmd = head_target(45.0, current_deg=85.0)
        assert cmd.expected_duration_s == pytest.approx(45.0 / 23.3)

    @given(st.floats(min_value=-180, max_value=180), st.floats(min_value=-180, max_value=180))
    def test_monotone_in_bearing(self, a, b):
        lo, hi = sorted((a, b))
        assert head_target(lo).target_deg <= head_target(hi).target_deg

    @given(st.floats(min_value=-85, max_value=85))
    def test_unclamped_band_roundtrips(self, bearing):
        cmd = head_target(bearing)
        assert not cmd.clamped
        assert cmd.target_deg - 85.0 == pytest.approx(bearing)


class TestMoveDuration:
    def test_head_full_sweep(self):
        assert move_duration(Joint.HEAD, 0, 170) == pytest.approx(7.296, abs=1e-3)

    def test_shoulder_quarter(self):
        assert move_duration(Joint.SHOULDER_LEFT, 0, 90) == pytest.approx(2.466, abs=1e-3)

    def test_zero_displacement(self):
        assert move_duration(Joint.ELBOW_RIGHT, 30, 30) == 0.0

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            move_duration(Joint.ELBOW_LEFT, 0, 120)
        with pytest.raises(OutOfRange):
            move_duration(Joint.HEAD, -1, 20)

    @given(st.sampled_from(list(Joint)), st.data())
    def test_matches_hand_formula(self, joint, data):
        spec = JOINT_SPECS[joint]
        a = data.draw(st.floats(min_value=0, max_value=spec.range_deg))
        b = data.draw(st.floats(min_value=0, max_value=spec.range_deg))
        assert move_duration(joint, a, b) == pytest.approx(abs(b - a) / spec.speed_deg_per_s)


class TestPlanGesture:
    def test_point_left_uses_left_arm(self):
        plan = plan_gesture(PointAt(-45.0))
        joints = {cmd.joint for step in plan.steps for cmd in step.commands}
        assert Joint.SHOULDER_LEFT in joints and Joint.ELBOW_LEFT in joints
        assert Joint.SHOULDER_RIGHT not in joints

    def test_point_zero_ties_to_right(self):
        plan = plan_gesture(PointAt(0.0))
        joints = {cmd.joint for step in plan.steps for cmd in step.commands}
        assert Joint.SHOULDER_RIGHT in joints

    def test_rest_from_rest_is_empty(self):
        plan = plan_gesture(Rest())
        assert plan.steps == ()
        assert plan.total_duration_s == 0.0

    def test_point_duration_matches_recompute(self):
        plan = plan_gesture(PointAt(45.0))
        # raise 90 deg shoulder + extend 60 deg elbow + 2 s dwell + parallel return
        by_hand = 90 / 36.5 + 60 / 69.0 + 2.0 + max(90 / 36.5, 60 / 69.0)
        assert plan.total_duration_s == pytest.approx(by_hand)
        assert plan.total_duration_s == pytest.approx(recompute_total(plan))

    def test_wave_total_matches_recompute(self):
        plan = plan_gesture(Wave())
        assert plan.total_duration_s == pytest.approx(recompute_total(plan))

    @given(st.floats(min_value=-720, max_value=720, allow_nan=False))
    def test_targets_within_ranges(self, bearing):
        plan = plan_gesture(PointAt(bearing))
        for step in plan.steps:
            for cmd in step.commands:
                assert 0.0 <= cmd.target_deg <= JOINT_SPECS[cmd.joint].range_deg

    def test_ten_thousand_random_bearings_stay_in_range(self):
        rng = np.random.default_rng(11)
        bearings = rng.uniform(-180, 180, 10_000)
        for bearing in bearings:
            head = head_target(float(bearing))
            assert 0.0 <= head.target_deg <= 170.0
            for step in plan_gesture(PointAt(float(bearing))).steps:
                for cmd in step.commands:
                    assert 0.0 <= cmd.target_deg <= JOINT_SPECS[cmd.joint].range_deg

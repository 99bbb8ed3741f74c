"""Vehicle dynamics, along-track separation, sensor models, and the
ground-truth world shared by plant and sensor nodes."""
from __future__ import annotations

import math

import numpy as np
import pytest

from halosim.messages import ActuationState
from halosim.plant import (
    OpponentConfig,
    SensorNoise,
    SimultaneousAccelBrake,
    VehicleParams,
    VehicleState,
    World,
    engine_rpm,
    sample_gnss,
    sample_imu,
    sample_wheel_speed,
    step_dynamics,
    true_separation_m,
)
from halosim.track import build_default_track

SEC = 1_000_000_000


def cmd(accel=0.0, brake=0.0, gear=4, steer=0.0) -> ActuationState:
    return ActuationState(0, accel, brake, gear, steer)


def rest_state(**overrides) -> VehicleState:
    base = dict(x_m=0.0, y_m=0.0, heading_rad=0.0, speed_mps=0.0)
    base.update(overrides)
    return VehicleState(**base)


@pytest.fixture(scope="module")
def track():
    return build_default_track()


class TestStepDynamics:
    def test_at_rest_with_no_command_stays_put(self):
        out = step_dynamics(rest_state(), cmd(), VehicleParams(), 0.01)
        assert (out.x_m, out.y_m, out.speed_mps) == (0.0, 0.0, 0.0)

    def test_straight_line_advance(self):
        params = VehicleParams(drag_coeff=0.0)
        state = rest_state(speed_mps=20.0)
        for _ in range(100):
            state = step_dynamics(state, cmd(), params, 0.01)
        assert state.x_m == pytest.approx(20.0)
        assert state.y_m == pytest.approx(0.0)
        assert state.speed_mps == pytest.approx(20.0)

    def test_heading_rate_matches_bicycle_model(self):
        state = rest_state(speed_mps=20.0)
        out = step_dynamics(state, cmd(steer=5.0), VehicleParams(), 0.01)
        expected = (20.0 / 3.0) * math.tan(math.radians(5.0)) * 0.01
        assert out.heading_rad == pytest.approx(expected)
        assert out.yaw_rate_rps == pytest.approx(expected / 0.01)

    def test_simultaneous_accel_brake_rejected(self):
        with pytest.raises(SimultaneousAccelBrake):
            step_dynamics(rest_state(), cmd(accel=0.3, brake=0.3), VehicleParams(), 0.01)

    def test_steering_clamped_to_physical_envelope(self):
        state = rest_state(speed_mps=10.0)
        hard = step_dynamics(state, cmd(steer=60.0), VehicleParams(), 0.01)
        at_max = step_dynamics(state, cmd(steer=24.0), VehicleParams(), 0.01)
        assert hard.heading_rad == pytest.approx(at_max.heading_rad)

    def test_speed_never_negative(self):
        state = rest_state(speed_mps=0.5)
        out = step_dynamics(state, cmd(brake=1.0), VehicleParams(), 0.2)
        assert out.speed_mps == 0.0

    def test_speed_clamped_at_top(self):
        params = VehicleParams(drag_coeff=0.0, top_speed_mps=30.0)
        state = rest_state(speed_mps=29.9)
        out = step_dynamics(state, cmd(accel=1.0), params, 1.0)
        assert out.speed_mps == 30.0

    def test_coasting_never_gains_speed(self):
        state = rest_state(speed_mps=40.0)
        for _ in range(200):
            nxt = step_dynamics(state, cmd(), VehicleParams(), 0.01)
            assert nxt.speed_mps <= state.speed_mps
            state = nxt

    def test_engine_off_ignores_throttle_and_drags(self):
        params = VehicleParams()
        state = rest_state(speed_mps=20.0, engine_on=False)
        out = step_dynamics(state, cmd(accel=1.0), params, 1.0)
        expected = 20.0 - (params.drag_coeff * 400.0 + params.engine_off_drag_mps2)
        assert out.speed_mps == pytest.approx(expected)

    def test_gear_floor_is_one(self):
        out = step_dynamics(rest_state(), cmd(gear=0), VehicleParams(), 0.01)
        assert out.gear == 1


class TestEngineRpm:
    def test_idle_floor(self):
        assert engine_rpm(rest_state(speed_mps=1.0, gear=6), VehicleParams()) == 1200.0

    def test_scales_with_speed_per_gear(self):
        params = VehicleParams()
        state = rest_state(speed_mps=40.0)
        state.gear = 4
        assert engine_rpm(state, params) == pytest.approx(40.0 * 105.0)

    def test_engine_off_reads_zero(self):
        assert engine_rpm(rest_state(speed_mps=30.0, engine_on=False), VehicleParams()) == 0.0


class TestSeparation:
    def test_same_point_is_zero(self, track):
        p = track.centerline.point_at_s(200.0)
        assert true_separation_m(track, p, p) == pytest.approx(0.0, abs=1e-6)

    def test_opponent_ahead_positive(self, track):
        ego = track.centerline.point_at_s(100.0)
        opp = track.centerline.point_at_s(130.0)
        assert true_separation_m(track, ego, opp) == pytest.approx(30.0, abs=0.1)

    def test_opponent_behind_negative(self, track):
        ego = track.centerline.point_at_s(100.0)
        opp = track.centerline.point_at_s(47.0)
        assert true_separation_m(track, ego, opp) == pytest.approx(-53.0, abs=0.1)

    def test_antisymmetric_off_the_wrap_point(self, track):
        a = track.centerline.point_at_s(200.0)
        b = track.centerline.point_at_s(300.0)
        assert true_separation_m(track, a, b) == pytest.approx(
            -true_separation_m(track, b, a), abs=1e-6
        )

    def test_wraps_to_half_length(self, track):
        length = track.centerline.total_length
        ego = track.centerline.point_at_s(0.0)
        opp = track.centerline.point_at_s(length - 40.0)
        assert true_separation_m(track, ego, opp) == pytest.approx(-40.0, abs=0.1)


class TestSensors:
    def test_gnss_zero_noise_recovers_truth(self, track):
        noise = SensorNoise(gnss_stddev_m=0.0)
        rng = np.random.default_rng(0)
        truth = rest_state(x_m=50.0, y_m=-20.0, speed_mps=10.0)
        fix = sample_gnss(truth, noise, rng, track, "top", 123)
        assert fix is not None
        assert fix.unit == "top"
        assert fix.stamp_ns == 123
        from halosim.localization import to_local_xy

        x, y = to_local_xy(
            fix.lat_deg, fix.lon_deg, track.origin_lat_deg, track.origin_lon_deg
        )
        assert x == pytest.approx(50.0, abs=1e-6)
        assert y == pytest.approx(-20.0, abs=1e-6)

    def test_gnss_reports_configured_stddev(self, track):
        noise = SensorNoise(gnss_stddev_m=0.35)
        fix = sample_gnss(rest_state(), noise, np.random.default_rng(0), track, "bottom", 0)
        assert fix.lat_stddev_m == 0.35
        assert fix.lon_stddev_m == 0.35

    def test_gnss_dropout_window_inclusive(self, track):
        noise = SensorNoise(gnss_dropouts={"top": [(1.0, 2.0)]})
        rng = np.random.default_rng(0)
        truth = rest_state()
        assert sample_gnss(truth, noise, rng, track, "top", int(0.9 * SEC)) is not None
        assert sample_gnss(truth, noise, rng, track, "top", 1 * SEC) is None
        assert sample_gnss(truth, noise, rng, track, "top", int(1.5 * SEC)) is None
        assert sample_gnss(truth, noise, rng, track, "top", 2 * SEC) is None
        assert sample_gnss(truth, noise, rng, track, "top", int(2.1 * SEC)) is not None
        # Other unit unaffected.
        assert sample_gnss(truth, noise, rng, track, "bottom", int(1.5 * SEC)) is not None

    def test_gnss_empirical_stddev(self, track):
        noise = SensorNoise()
        rng = np.random.default_rng(7)
        truth = rest_state()
        from halosim.localization import to_local_xy

        xs = []
        for i in range(4000):
            fix = sample_gnss(truth, noise, rng, track, "top", i)
            x, _ = to_local_xy(
                fix.lat_deg, fix.lon_deg, track.origin_lat_deg, track.origin_lon_deg
            )
            xs.append(x)
        measured = float(np.std(xs))
        assert measured == pytest.approx(noise.gnss_stddev_m, rel=0.05)

    def test_imu_centers_on_truth(self):
        rng = np.random.default_rng(3)
        truth = rest_state(speed_mps=10.0)
        truth.accel_mps2 = 2.0
        truth.yaw_rate_rps = 0.1
        samples = [sample_imu(truth, SensorNoise(), rng, i) for i in range(3000)]
        assert np.mean([s.accel_mps2 for s in samples]) == pytest.approx(2.0, abs=0.01)
        assert np.mean([s.yaw_rate_rps for s in samples]) == pytest.approx(0.1, abs=0.001)

    def test_wheel_speed_never_negative(self):
        rng = np.random.default_rng(11)
        truth = rest_state(speed_mps=0.01)
        assert all(
            sample_wheel_speed(truth, SensorNoise(), rng, i).speed_mps >= 0.0
            for i in range(2000)
        )


class TestWorld:
    def make_world(self, track, opponent=None):
        return World(
            track,
            VehicleParams(),
            ego_path="raceline",
            ego_start_s=0.0,
            ego_speed=20.0,
            opponent=opponent or OpponentConfig(),
        )

    def test_sample_ego_matches_advance(self, track):
        a = self.make_world(track)
        b = self.make_world(track)
        a.set_command(cmd(accel=0.4))
        b.set_command(cmd(accel=0.4))
        sampled = a.sample_ego(SEC)
        b.advance_to(SEC)
        assert sampled.x_m == b.ego.x_m
        assert sampled.speed_mps == b.ego.speed_mps
        # Sampling never mutates the world.
        assert a.ego.x_m != sampled.x_m
        assert a.updated_at_ns == 0

    def test_sample_ego_at_current_time_is_identity(self, track):
        world = self.make_world(track)
        world.advance_to(SEC)
        assert world.sample_ego(SEC) is world.ego

    def test_opponent_moves_at_configured_speed(self, track):
        opponent = OpponentConfig(enabled=True, speed_mps=10.0, start_arclength_m=50.0)
        world = self.make_world(track, opponent)
        xy0 = world.opponent_xy(0)
        xy1 = world.opponent_xy(2 * SEC)
        race = track.paths["raceline"]
        s0 = race.project(xy0).s_m
        s1 = race.project(xy1).s_m
        assert (s1 - s0) % race.total_length == pytest.approx(20.0, abs=0.1)

    def test_separation_none_without_opponent(self, track):
        world = self.make_world(track)
        assert world.true_separation(0) is None
        assert world.opponent_xy(0) is None

    def test_engine_kill_flows_into_dynamics(self, track):
        world = self.make_world(track)
        world.set_command(cmd(accel=1.0))
        world.kill_engine()
        world.advance_to(2 * SEC)
        assert world.ego.speed_mps < 20.0

    def test_ego_centerline_s_tracks_motion(self, track):
        world = self.make_world(track)
        s0 = world.ego_centerline_s(0)
        s1 = world.ego_centerline_s(SEC)
        assert (s1 - s0) % track.centerline.total_length == pytest.approx(20.0, abs=0.5)

"""Vehicle plant and sensor models.

Kinematic bicycle dynamics on a closed track, a constant-speed opponent on
the raceline, and the sensor feeds the software stack consumes (dual GNSS,
IMU, wheel speed, engine, diagnostics).  All parameter defaults here are
synthetic tuning values, not measurements of any real vehicle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import topics
from .bus import Node
from .localization import from_local_xy
from .messages import (
    ActuationState,
    DiagnosticsReport,
    EngineReport,
    GnssFix,
    ImuSample,
    TruthRecord,
    WheelSpeedReport,
)
from .track import TrackModel


class SimultaneousAccelBrake(Exception):
    """Accelerator and brake both positive in one command set."""


@dataclass
class VehicleParams:
    wheelbase_m: float = 3.0
    max_accel_mps2: float = 5.0
    max_brake_mps2: float = 10.0
    drag_coeff: float = 0.0008  # quadratic, decel = coeff * v^2
    top_speed_mps: float = 90.0
    max_steer_deg: float = 24.0  # physical envelope
    engine_off_drag_mps2: float = 1.0
    idle_rpm: float = 1200.0
    # rpm per m/s in gears 1..6 (index 0 unused)
    rpm_per_mps: tuple[float, ...] = (0.0, 260.0, 180.0, 135.0, 105.0, 85.0, 70.0)


@dataclass
class VehicleState:
    x_m: float
    y_m: float
    heading_rad: float
    speed_mps: float
    accel_mps2: float = 0.0
    yaw_rate_rps: float = 0.0
    gear: int = 1
    engine_on: bool = True


def step_dynamics(
    state: VehicleState,
    command: ActuationState,
    params: VehicleParams,
    dt_s: float,
) -> VehicleState:
    """One explicit-Euler step of the kinematic bicycle.

    Position and heading integrate with the pre-step speed; the speed update
    applies commanded accel/brake, quadratic drag, and the engine state.
    """
    if command.accelerator > 0.0 and command.brake > 0.0:
        raise SimultaneousAccelBrake(
            f"accel={command.accelerator} brake={command.brake}"
        )
    steer_deg = max(-params.max_steer_deg, min(params.max_steer_deg, command.steering_deg))
    steer_rad = math.radians(steer_deg)
    v = state.speed_mps

    yaw_rate = (v / params.wheelbase_m) * math.tan(steer_rad)
    heading = state.heading_rad + yaw_rate * dt_s
    x = state.x_m + v * math.cos(state.heading_rad) * dt_s
    y = state.y_m + v * math.sin(state.heading_rad) * dt_s

    drive = command.accelerator * params.max_accel_mps2 if state.engine_on else 0.0
    engine_drag = 0.0 if state.engine_on else params.engine_off_drag_mps2
    net_accel = (
        drive
        - command.brake * params.max_brake_mps2
        - params.drag_coeff * v * v
        - engine_drag
    )
    new_speed = min(max(v + net_accel * dt_s, 0.0), params.top_speed_mps)

    return replace(
        state,
        x_m=x,
        y_m=y,
        heading_rad=heading,
        speed_mps=new_speed,
        accel_mps2=(new_speed - v) / dt_s,
        yaw_rate_rps=yaw_rate,
        gear=max(1, command.gear),
    )


def engine_rpm(state: VehicleState, params: VehicleParams) -> float:
    if not state.engine_on:
        return 0.0
    return max(params.idle_rpm, state.speed_mps * params.rpm_per_mps[state.gear])


def true_separation_m(
    track: TrackModel, ego_xy: np.ndarray, opponent_xy: np.ndarray
) -> float:
    """Signed along-track gap on the centerline; positive = opponent ahead,
    wrapped to (-L/2, L/2]."""
    center = track.centerline
    s_ego = center.project(ego_xy).s_m
    s_opp = center.project(opponent_xy).s_m
    length = center.total_length
    delta = (s_opp - s_ego) % length
    if delta > length / 2.0:
        delta -= length
    return delta


# -- sensor noise -------------------------------------------------------------


@dataclass
class SensorNoise:
    gnss_stddev_m: float = 0.008306623862918075  # per axis; variance 6.9e-5
    imu_accel_stddev: float = 0.05
    imu_yaw_stddev: float = 0.002
    wheel_stddev: float = 0.05
    # Silent windows per GNSS unit, seconds: {"top": [(t0, t1)], ...}
    gnss_dropouts: dict[str, list[tuple[float, float]]] = field(default_factory=dict)


def sample_gnss(
    truth: VehicleState,
    noise: SensorNoise,
    rng: np.random.Generator,
    track: TrackModel,
    unit: str,
    stamp_ns: int,
) -> GnssFix | None:
    """Noisy geodetic fix, or None inside a scheduled dropout window."""
    t_s = stamp_ns / 1e9
    for t0, t1 in noise.gnss_dropouts.get(unit, []):
        if t0 <= t_s <= t1:
            return None
    nx, ny = rng.normal(0.0, noise.gnss_stddev_m, size=2)
    lat, lon = from_local_xy(
        truth.x_m + nx, truth.y_m + ny, track.origin_lat_deg, track.origin_lon_deg
    )
    return GnssFix(
        stamp_ns=stamp_ns,
        lat_deg=lat,
        lon_deg=lon,
        lat_stddev_m=noise.gnss_stddev_m,
        lon_stddev_m=noise.gnss_stddev_m,
        unit=unit,
    )


def sample_imu(
    truth: VehicleState, noise: SensorNoise, rng: np.random.Generator, stamp_ns: int
) -> ImuSample:
    return ImuSample(
        stamp_ns=stamp_ns,
        accel_mps2=truth.accel_mps2 + rng.normal(0.0, noise.imu_accel_stddev),
        yaw_rate_rps=truth.yaw_rate_rps + rng.normal(0.0, noise.imu_yaw_stddev),
    )


def sample_wheel_speed(
    truth: VehicleState, noise: SensorNoise, rng: np.random.Generator, stamp_ns: int
) -> WheelSpeedReport:
    speed = max(0.0, truth.speed_mps + rng.normal(0.0, noise.wheel_stddev))
    return WheelSpeedReport(stamp_ns=stamp_ns, speed_mps=speed)


# -- world ---------------------------------------------------------------------


@dataclass
class OpponentConfig:
    enabled: bool = False
    speed_mps: float = 26.8224  # 60 mph
    start_arclength_m: float = 0.0
    path: str = "raceline"


class World:
    """Ground truth shared by the plant and sensor nodes.

    `sample_ego(t)` extrapolates with the exact step function, so sensors
    that tick before the plant at a coincident instant still observe the
    state at their own timestamp.
    """

    def __init__(
        self,
        track: TrackModel,
        params: VehicleParams,
        ego_path: str,
        ego_start_s: float,
        ego_speed: float,
        opponent: OpponentConfig,
    ) -> None:
        self.track = track
        self.params = params
        path = track.paths[ego_path]
        start_xy = path.point_at_s(ego_start_s)
        self.ego = VehicleState(
            x_m=float(start_xy[0]),
            y_m=float(start_xy[1]),
            heading_rad=path.heading_at_s(ego_start_s),
            speed_mps=ego_speed,
            gear=4,
        )
        self.updated_at_ns = 0
        self.command = ActuationState(0, 0.0, 0.0, 4, 0.0)
        self.opponent = opponent
        self.opponent_s = opponent.start_arclength_m
        self._center_hint: int | None = None

    def set_command(self, command: ActuationState) -> None:
        self.command = command

    def kill_engine(self) -> None:
        self.ego.engine_on = False

    def advance_to(self, t_ns: int) -> None:
        dt = (t_ns - self.updated_at_ns) / 1e9
        if dt > 0:
            self.ego = step_dynamics(self.ego, self.command, self.params, dt)
            if self.opponent.enabled:
                self.opponent_s += self.opponent.speed_mps * dt
            self.updated_at_ns = t_ns

    def sample_ego(self, t_ns: int) -> VehicleState:
        dt = (t_ns - self.updated_at_ns) / 1e9
        if dt <= 0:
            return self.ego
        return step_dynamics(self.ego, self.command, self.params, dt)

    def opponent_xy(self, t_ns: int) -> np.ndarray | None:
        if not self.opponent.enabled:
            return None
        dt = max(0.0, (t_ns - self.updated_at_ns) / 1e9)
        s = self.opponent_s + self.opponent.speed_mps * dt
        return self.track.paths[self.opponent.path].point_at_s(s)

    def true_separation(self, t_ns: int) -> float | None:
        opponent_xy = self.opponent_xy(t_ns)
        if opponent_xy is None:
            return None
        ego = self.sample_ego(t_ns)
        return true_separation_m(
            self.track, np.array([ego.x_m, ego.y_m]), opponent_xy
        )

    def ego_centerline_s(self, t_ns: int) -> float:
        ego = self.sample_ego(t_ns)
        result = self.track.centerline.project(
            np.array([ego.x_m, ego.y_m]), self._center_hint
        )
        self._center_hint = result.index
        return result.s_m


# -- nodes ---------------------------------------------------------------------


class PlantNode(Node):
    """Integrates ego dynamics from the drive-by-wire actuation stream and
    publishes ground-truth records for scoring."""

    name = "plant"
    rate_hz = 100.0
    subscribes = (topics.ACTUATION, topics.ENGINE_KILL, topics.PATH_STATUS)
    publishes = (topics.TRUTH,)

    def __init__(self, world: World, initial_path: str) -> None:
        self.world = world
        self._active_path = initial_path
        self._tick_count = 0

    def tick(self, now_ns: int) -> None:
        command = self.take_last(topics.ACTUATION)
        if command is not None:
            self.world.set_command(command.payload)
        if self.take(topics.ENGINE_KILL):
            self.world.kill_engine()
        status = self.take_last(topics.PATH_STATUS)
        if status is not None:
            self._active_path = status.payload.active_path
        self.world.advance_to(now_ns)
        self._tick_count += 1
        if self._tick_count % 5 == 0:
            ego = self.world.ego
            path = self.world.track.paths[self._active_path]
            lateral = path.project(np.array([ego.x_m, ego.y_m])).lateral_m
            self.publish(
                topics.TRUTH,
                TruthRecord(
                    stamp_ns=now_ns,
                    ego_x_m=ego.x_m,
                    ego_y_m=ego.y_m,
                    ego_heading_rad=ego.heading_rad,
                    ego_speed_mps=ego.speed_mps,
                    separation_m=self.world.true_separation(now_ns),
                    lateral_error_m=lateral,
                    engine_on=ego.engine_on,
                ),
            )


class GnssUnitNode(Node):
    rate_hz = 20.0

    def __init__(self, unit: str, world: World, noise: SensorNoise) -> None:
        self.unit = unit
        self.name = f"gnss_{unit}"
        self._topic = topics.GNSS_TOP if unit == "top" else topics.GNSS_BOTTOM
        self.publishes = (self._topic,)
        self.world = world
        self.noise = noise

    def tick(self, now_ns: int) -> None:
        truth = self.world.sample_ego(now_ns)
        fix = sample_gnss(truth, self.noise, self.rng, self.world.track, self.unit, now_ns)
        if fix is not None:
            self.publish(self._topic, fix)


class ImuNode(Node):
    name = "imu"
    rate_hz = 125.0
    publishes = (topics.IMU,)

    def __init__(self, world: World, noise: SensorNoise) -> None:
        self.world = world
        self.noise = noise

    def tick(self, now_ns: int) -> None:
        truth = self.world.sample_ego(now_ns)
        self.publish(topics.IMU, sample_imu(truth, self.noise, self.rng, now_ns))


class RaptorDbwNode(Node):
    """Drive-by-wire feedback: wheel speed and engine report every tick,
    diagnostics at 10 Hz.  Fault injection can force a diagnostics code."""

    name = "raptor_dbw"
    rate_hz = 100.0
    publishes = (topics.WHEEL_SPEED, topics.ENGINE, topics.DIAGNOSTICS)

    def __init__(self, world: World, noise: SensorNoise) -> None:
        self.world = world
        self.noise = noise
        self.forced_fault_code: int = 0
        self._tick_count = 0

    def tick(self, now_ns: int) -> None:
        truth = self.world.sample_ego(now_ns)
        self.publish(
            topics.WHEEL_SPEED, sample_wheel_speed(truth, self.noise, self.rng, now_ns)
        )
        self.publish(
            topics.ENGINE,
            EngineReport(
                stamp_ns=now_ns,
                rpm=engine_rpm(truth, self.world.params),
                coolant_temp_c=82.0 + 0.1 * truth.speed_mps,
                running=truth.engine_on,
            ),
        )
        self._tick_count += 1
        if self._tick_count % 10 == 0:
            code = self.forced_fault_code
            self.publish(
                topics.DIAGNOSTICS,
                DiagnosticsReport(stamp_ns=now_ns, ok=code == 0, code=code),
            )

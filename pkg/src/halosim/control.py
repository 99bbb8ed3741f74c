"""Longitudinal and lateral control.

Velocity tracking uses a dual-PID arrangement (one controller on the
accelerator, one on the brake) with a deadband so the two never fight;
steering is pure pursuit with a speed-scheduled lookahead and a
speed-scheduled maximum angle.  Command priority in the longitudinal node:
emergency shutdown, then fresh joystick override, then the graceful-stop
latch, then PID tracking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import topics
from .bus import Node
from .messages import Heartbeat, LongitudinalCommand, PathStatus, SteeringCommand
from .track import Path

MPS_PER_MPH = 0.44704

# Speed-scheduled lookahead: 15 m at or below 35 mph, linear to 50 m at
# 100 mph, capped beyond.
LOOKAHEAD_LOW_MPS = 35.0 * MPS_PER_MPH
LOOKAHEAD_HIGH_MPS = 100.0 * MPS_PER_MPH
LOOKAHEAD_MIN_M = 15.0
LOOKAHEAD_MAX_M = 50.0

# Speed-scheduled steering envelope: 24 deg at or below 35 mph, linear down
# to 10 deg at 100 mph, 10 deg beyond.
STEER_MAX_LOW_DEG = 24.0
STEER_MAX_HIGH_DEG = 10.0

VELOCITY_DEADBAND_MPS = 0.25
JOYSTICK_FRESH_NS = 200_000_000
LATCH_QUIET_NS = 5_000_000_000

UPSHIFT_RPM = 6000.0
DOWNSHIFT_RPM = 3500.0
MIN_GEAR, MAX_GEAR = 1, 6


class EmptyPath(Exception):
    pass


@dataclass(frozen=True)
class PidState:
    kp: float = 0.6
    ki: float = 0.1
    kd: float = 0.0
    integral: float = 0.0
    prev_error: float | None = None
    out_min: float = 0.0
    out_max: float = 1.0


def pid_step(state: PidState, error: float, dt_s: float) -> tuple[float, PidState]:
    """One PID update; output clamped, integral clamped against windup."""
    integral = state.integral + error * dt_s
    if state.ki > 0.0:
        limit = state.out_max / state.ki
        integral = max(-limit, min(limit, integral))
    derivative = 0.0
    if state.prev_error is not None and dt_s > 0.0:
        derivative = (error - state.prev_error) / dt_s
    raw = state.kp * error + state.ki * integral + state.kd * derivative
    out = max(state.out_min, min(state.out_max, raw))
    return out, replace(state, integral=integral, prev_error=error)


def pid_reset(state: PidState) -> PidState:
    return replace(state, integral=0.0, prev_error=None)


def select_gear(current_gear: int, rpm: float) -> int:
    """Hysteresis shifter: up past 6000 rpm, down below 3500 rpm."""
    if rpm > UPSHIFT_RPM and current_gear < MAX_GEAR:
        return current_gear + 1
    if rpm < DOWNSHIFT_RPM and current_gear > MIN_GEAR:
        return current_gear - 1
    return current_gear


def lookahead_distance_m(speed_mps: float) -> float:
    if speed_mps <= LOOKAHEAD_LOW_MPS:
        return LOOKAHEAD_MIN_M
    if speed_mps >= LOOKAHEAD_HIGH_MPS:
        return LOOKAHEAD_MAX_M
    frac = (speed_mps - LOOKAHEAD_LOW_MPS) / (LOOKAHEAD_HIGH_MPS - LOOKAHEAD_LOW_MPS)
    return LOOKAHEAD_MIN_M + (LOOKAHEAD_MAX_M - LOOKAHEAD_MIN_M) * frac


def max_steering_angle_deg(speed_mps: float) -> float:
    if speed_mps <= LOOKAHEAD_LOW_MPS:
        return STEER_MAX_LOW_DEG
    if speed_mps >= LOOKAHEAD_HIGH_MPS:
        return STEER_MAX_HIGH_DEG
    frac = (speed_mps - LOOKAHEAD_LOW_MPS) / (LOOKAHEAD_HIGH_MPS - LOOKAHEAD_LOW_MPS)
    return STEER_MAX_LOW_DEG + (STEER_MAX_HIGH_DEG - STEER_MAX_LOW_DEG) * frac


def pure_pursuit_steer(
    position_xy: np.ndarray,
    heading_rad: float,
    speed_mps: float,
    path: Path,
    wheelbase_m: float = 3.0,
    hint: int | None = None,
) -> tuple[float, int]:
    """Pure-pursuit steering angle in degrees, clamped to the speed envelope.

    Returns (angle_deg, waypoint_hint) where the hint warm-starts the next
    nearest-waypoint search.
    """
    if len(path) == 0:
        raise EmptyPath(path.name)
    lookahead = lookahead_distance_m(speed_mps)
    nearest = path.closest_index(position_xy, hint)
    # Target: first waypoint at least one lookahead along the chain.
    n = len(path)
    dist = 0.0
    k = nearest
    while dist < lookahead and k - nearest <= n:
        dist += path.seg_lengths[k % n]
        k += 1
    target = path.xy[k % n]
    bearing = math.atan2(target[1] - position_xy[1], target[0] - position_xy[0])
    alpha = (bearing - heading_rad + math.pi) % (2.0 * math.pi) - math.pi
    angle = math.degrees(math.atan2(2.0 * wheelbase_m * math.sin(alpha), lookahead))
    limit = max_steering_angle_deg(speed_mps)
    return max(-limit, min(limit, angle)), nearest


@dataclass
class PathSet:
    paths: dict[str, Path]
    active: str


def switch_path(paths: PathSet, requested: str) -> tuple[PathSet, bool]:
    """Activate `requested` if it exists; unknown names leave the previous
    path active (non-fatal, reported via the False flag)."""
    if requested not in paths.paths:
        return paths, False
    return PathSet(paths.paths, requested), True


@dataclass
class GracefulLatch:
    engaged: bool = False
    reason: str = ""
    last_flag_ns: int = 0


def apply_graceful_latch(
    latch: GracefulLatch,
    desired_mps: float,
    stop_flag_seen: bool,
    reason: str,
    now_ns: int,
) -> tuple[GracefulLatch, float]:
    """Zero the velocity target while stopped; release only after a strict
    5 s of virtual time with no stop flag."""
    if stop_flag_seen:
        latch = GracefulLatch(engaged=True, reason=reason, last_flag_ns=now_ns)
    elif latch.engaged and now_ns - latch.last_flag_ns > LATCH_QUIET_NS:
        latch = GracefulLatch(engaged=False, reason="", last_flag_ns=latch.last_flag_ns)
    return latch, (0.0 if latch.engaged else desired_mps)


def long_control_tick(
    current_mps: float,
    desired_mps: float,
    accel_pid: PidState,
    brake_pid: PidState,
    dt_s: float,
) -> tuple[float, float, PidState, PidState]:
    """Dual-PID longitudinal step: (accelerator, brake, states').

    Exactly one of accelerator/brake can be nonzero; inside the deadband
    both are zero and both integrators reset.
    """
    error = desired_mps - current_mps
    if error > VELOCITY_DEADBAND_MPS:
        accel, accel_pid = pid_step(accel_pid, error, dt_s)
        return accel, 0.0, accel_pid, pid_reset(brake_pid)
    if error < -VELOCITY_DEADBAND_MPS:
        brake, brake_pid = pid_step(brake_pid, -error, dt_s)
        return 0.0, brake, pid_reset(accel_pid), brake_pid
    return 0.0, 0.0, pid_reset(accel_pid), pid_reset(brake_pid)


# -- nodes ---------------------------------------------------------------------


class LongControlNode(Node):
    """Velocity tracking and gear selection at 100 Hz."""

    name = "long_control"
    rate_hz = 100.0
    subscribes = (
        topics.DESIRED_VELOCITY,
        topics.STOP_FLAG,
        topics.JOYSTICK,
        topics.WHEEL_SPEED,
        topics.ENGINE,
        topics.ENGINE_KILL,
    )
    publishes = (topics.LONG_CMD, topics.heartbeat("long_control"))

    def __init__(self, initial_desired_mps: float = 0.0) -> None:
        self._desired = initial_desired_mps
        self._accel_pid = PidState()
        self._brake_pid = PidState()
        self._latch = GracefulLatch()
        self._gear = 4
        self._speed = 0.0
        self._last_joystick = None
        self._engine_killed = False
        self._hb_counter = 0
        self._tick_count = 0

    def tick(self, now_ns: int) -> None:
        for message in self.take(topics.DESIRED_VELOCITY):
            self._desired = message.payload.speed_mps
        wheel = self.take_last(topics.WHEEL_SPEED)
        if wheel is not None:
            self._speed = wheel.payload.speed_mps
        engine = self.take_last(topics.ENGINE)
        rpm = engine.payload.rpm if engine else 0.0
        if self.take(topics.ENGINE_KILL):
            self._engine_killed = True
        joystick = self.take_last(topics.JOYSTICK)
        if joystick is not None:
            self._last_joystick = joystick

        stop_msgs = [m for m in self.take(topics.STOP_FLAG) if m.payload.engaged]
        reason = stop_msgs[-1].payload.reason.value if stop_msgs else self._latch.reason
        self._latch, effective_desired = apply_graceful_latch(
            self._latch, self._desired, bool(stop_msgs), reason, now_ns
        )

        if self._engine_killed:
            accel, brake = 0.0, 0.0
            effective_desired = 0.0
        elif self._joystick_fresh(now_ns):
            js = self._last_joystick.payload
            brake = min(1.0, max(0.0, js.brake))
            accel = 0.0 if brake > 0.0 else min(1.0, max(0.0, js.accelerator))
        else:
            accel, brake, self._accel_pid, self._brake_pid = long_control_tick(
                self._speed, effective_desired, self._accel_pid, self._brake_pid, 0.01
            )
        self._gear = select_gear(self._gear, rpm)
        self.publish(
            topics.LONG_CMD,
            LongitudinalCommand(
                stamp_ns=now_ns,
                accelerator=accel,
                brake=brake,
                gear=self._gear,
                desired_mps=effective_desired,
            ),
        )
        self._tick_count += 1
        if self._tick_count % 5 == 0:
            self.publish(
                topics.heartbeat(self.name),
                Heartbeat(stamp_ns=now_ns, counter=self._hb_counter),
            )
            self._hb_counter += 1

    def _joystick_fresh(self, now_ns: int) -> bool:
        js = self._last_joystick
        return (
            js is not None
            and js.payload.engaged
            and now_ns - js.stamp_ns <= JOYSTICK_FRESH_NS
        )

    @property
    def effective_desired(self) -> float:
        return 0.0 if self._latch.engaged else self._desired


class PathTrackerNode(Node):
    """Pure-pursuit steering on the active path at 100 Hz."""

    name = "path_tracker"
    rate_hz = 100.0
    subscribes = (
        topics.BEST_ODOM,
        topics.WHEEL_SPEED,
        topics.PATH_REQUEST,
        topics.ENGINE_KILL,
    )
    publishes = (
        topics.STEER_CMD,
        topics.PATH_STATUS,
        topics.heartbeat("path_tracker"),
    )

    def __init__(self, paths: PathSet, wheelbase_m: float = 3.0) -> None:
        self._paths = paths
        self._wheelbase = wheelbase_m
        self._pose = None
        self._speed = 0.0
        self._hint: int | None = None
        self._hb_counter = 0
        self._tick_count = 0

    @property
    def active_path(self) -> str:
        return self._paths.active

    def tick(self, now_ns: int) -> None:
        pose = self.take_last(topics.BEST_ODOM)
        if pose is not None:
            self._pose = pose.payload
        wheel = self.take_last(topics.WHEEL_SPEED)
        if wheel is not None:
            self._speed = wheel.payload.speed_mps
        for request in self.take(topics.PATH_REQUEST):
            self._paths, switched = switch_path(self._paths, request.payload.path)
            if switched:
                self._hint = None
            else:
                self.bus.trace_action(
                    self.name, "path_request_rejected", path=request.payload.path
                )
        self.take(topics.ENGINE_KILL)

        angle = 0.0
        lateral = 0.0
        if self._pose is not None:
            position = np.array([self._pose.x_m, self._pose.y_m])
            path = self._paths.paths[self._paths.active]
            angle, self._hint = pure_pursuit_steer(
                position,
                self._pose.heading_rad,
                self._speed,
                path,
                self._wheelbase,
                self._hint,
            )
            lateral = path.project(position, self._hint).lateral_m
        self.publish(topics.STEER_CMD, SteeringCommand(stamp_ns=now_ns, angle_deg=angle))
        self._tick_count += 1
        if self._tick_count % 5 == 0:
            self.publish(
                topics.PATH_STATUS,
                PathStatus(
                    stamp_ns=now_ns,
                    active_path=self._paths.active,
                    lateral_error_m=lateral,
                ),
            )
            self.publish(
                topics.heartbeat(self.name),
                Heartbeat(stamp_ns=now_ns, counter=self._hb_counter),
            )
            self._hb_counter += 1

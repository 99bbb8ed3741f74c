"""Radio links and the drive-by-wire boundary.

Race flags and the operator joystick arrive over radio; coverage is modeled
per-link as dead arcs along the centerline, so a feed simply goes silent
while the car drives through a gap.  The joystick counter still advances
during an outage, which is what lets the health ledger count missed beats.

The drive-by-wire interface merges longitudinal and steering commands into
one actuation state, applies the data-health gate to each field, honors a
fresh safety brake above everything except an engine kill, and turns a
double bumper press into an immediate engine kill.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import topics
from .bus import Node
from .halo import data_health_gate
from .messages import (
    ActuationState,
    EngineKill,
    FlagColor,
    FlagOrigin,
    Heartbeat,
    JoystickMessage,
    RaceFlag,
    TelemetrySnapshot,
)
from .plant import World


def bumper_kill(message: JoystickMessage) -> bool:
    """Both bumpers held at once is the remote kill gesture."""
    return message.bumper_left and message.bumper_right


class FlagFeedNode(Node):
    """Publishes the scheduled flag color at 10 Hz while its link is up.

    schedule: [(t_s, color)] sorted; the latest entry at or before now wins.
    """

    rate_hz = 10.0
    subscribes = ()

    def __init__(
        self,
        world: World,
        schedule: list[tuple[float, FlagColor]],
        name: str = "mylaps_feed",
        topic: str = topics.MYLAPS_FLAGS,
        origin: FlagOrigin = FlagOrigin.MYLAPS,
        link: str = "mylaps",
    ) -> None:
        self.name = name
        self.publishes = (topic,)
        self.world = world
        self.schedule = sorted(schedule, key=lambda item: item[0])
        self.topic = topic
        self.origin = origin
        self.link = link

    def current_color(self, now_ns: int) -> FlagColor | None:
        color = None
        for t_s, entry in self.schedule:
            if int(t_s * 1e9) <= now_ns:
                color = entry
            else:
                break
        return color

    def tick(self, now_ns: int) -> None:
        color = self.current_color(now_ns)
        if color is None:
            return
        ego_s = self.world.ego_centerline_s(now_ns)
        if not self.world.track.link_alive(self.link, ego_s):
            return
        self.publish(
            self.topic, RaceFlag(stamp_ns=now_ns, color=color, origin=self.origin)
        )


@dataclass
class JoystickScript:
    """Operator inputs: bumper-press instants and manual override windows."""

    bumper_press_s: tuple[float, ...] = ()
    overrides: tuple[dict, ...] = ()  # {t0_s, t1_s, accelerator?, brake?, steering_deg?}


class JoystickNode(Node):
    name = "joystick_link"
    rate_hz = 100.0
    subscribes = ()
    publishes = (topics.JOYSTICK,)

    def __init__(self, world: World, script: JoystickScript | None = None,
                 link: str = "basestation") -> None:
        self.world = world
        self.script = script or JoystickScript()
        self.link = link
        self._counter = 0
        self._pressed: set[float] = set()

    def tick(self, now_ns: int) -> None:
        counter = self._counter
        self._counter += 1  # advances even when the radio is down
        ego_s = self.world.ego_centerline_s(now_ns)
        if not self.world.track.link_alive(self.link, ego_s):
            return
        bumpers = False
        for t_s in self.script.bumper_press_s:
            if t_s not in self._pressed and int(t_s * 1e9) <= now_ns:
                self._pressed.add(t_s)
                bumpers = True
        engaged = False
        accelerator = brake = steering = 0.0
        for window in self.script.overrides:
            if int(window["t0_s"] * 1e9) <= now_ns < int(window["t1_s"] * 1e9):
                engaged = True
                accelerator = float(window.get("accelerator", 0.0))
                brake = float(window.get("brake", 0.0))
                steering = float(window.get("steering_deg", 0.0))
        self.publish(
            topics.JOYSTICK,
            JoystickMessage(
                stamp_ns=now_ns,
                counter=counter,
                bumper_left=bumpers,
                bumper_right=bumpers,
                engaged=engaged,
                accelerator=accelerator,
                brake=brake,
                steering_deg=steering,
            ),
        )


class TelemetryNode(Node):
    name = "telemetry"
    rate_hz = 5.0
    subscribes = (
        topics.BEST_ODOM,
        topics.ENGINE,
        topics.STOP_FLAG,
        topics.LONG_CMD,
        topics.PATH_STATUS,
        topics.BEST_FLAGS,
    )
    publishes = (topics.TELEMETRY,)

    def __init__(self) -> None:
        self._engine_temp = 0.0
        self._cov = 0.0
        self._speed = 0.0
        self._desired = 0.0
        self._lateral = 0.0
        self._flag = ""
        self._x = 0.0
        self._y = 0.0
        self._last_stop = ""  # persists after the flag releases

    def tick(self, now_ns: int) -> None:
        for m in self.take(topics.BEST_ODOM):
            pose = m.payload
            self._speed = pose.speed_mps
            self._cov = pose.scalar_cov
            self._x, self._y = pose.x_m, pose.y_m
        for m in self.take(topics.ENGINE):
            self._engine_temp = m.payload.coolant_temp_c
        for m in self.take(topics.STOP_FLAG):
            if m.payload.engaged:
                self._last_stop = m.payload.reason.value
        for m in self.take(topics.LONG_CMD):
            self._desired = m.payload.desired_mps
        for m in self.take(topics.PATH_STATUS):
            self._lateral = m.payload.lateral_error_m
        for m in self.take(topics.BEST_FLAGS):
            self._flag = m.payload.color.value
        self.publish(
            topics.TELEMETRY,
            TelemetrySnapshot(
                stamp_ns=now_ns,
                engine_temp_c=self._engine_temp,
                localization_scalar_cov=self._cov,
                current_speed_mps=self._speed,
                desired_speed_mps=self._desired,
                lateral_error_m=self._lateral,
                flag=self._flag,
                x_m=self._x,
                y_m=self._y,
                last_stop_reason=self._last_stop,
            ),
        )


@dataclass
class _LastGood:
    accel: float = 0.0
    brake: float = 0.0
    gear: int = 1
    steering_deg: float = 0.0


class SscInterfaceNode(Node):
    """Command merger in front of the drive-by-wire system."""

    name = "ssc_interface"
    rate_hz = 100.0
    subscribes = (
        topics.LONG_CMD,
        topics.STEER_CMD,
        topics.HALO_BRAKE,
        topics.JOYSTICK,
        topics.ENGINE_KILL,
    )
    publishes = (
        topics.ACTUATION,
        topics.ENGINE_KILL,
        topics.heartbeat("ssc_interface"),
    )

    HALO_BRAKE_FRESH_NS = 500_000_000
    MAX_STEER_DEG = 24.0

    def __init__(self) -> None:
        self._good = _LastGood()
        self._halo_brake: tuple[float, int] | None = None  # (value, stamp)
        self._engine_killed = False
        self._hb_counter = 0
        self._tick_count = 0

    def tick(self, now_ns: int) -> None:
        good = self._good
        for m in self.take(topics.LONG_CMD):
            cmd = m.payload
            ok_a, _ = data_health_gate(cmd.accelerator, 0.0, 1.0)
            ok_b, _ = data_health_gate(cmd.brake, 0.0, 1.0)
            ok_g, _ = data_health_gate(cmd.gear, 1, 6)
            if ok_a and ok_b and ok_g:
                good.accel = cmd.accelerator
                good.brake = cmd.brake
                good.gear = int(cmd.gear)
            else:
                self.bus.trace_action(self.name, "command_rejected", field="longitudinal")
        for m in self.take(topics.STEER_CMD):
            ok, _ = data_health_gate(
                m.payload.angle_deg, -self.MAX_STEER_DEG, self.MAX_STEER_DEG
            )
            if ok:
                good.steering_deg = m.payload.angle_deg
            else:
                self.bus.trace_action(self.name, "command_rejected", field="steering")
        for m in self.take(topics.HALO_BRAKE):
            self._halo_brake = (m.payload.brake, m.stamp_ns)
        for m in self.take(topics.JOYSTICK):
            if bumper_kill(m.payload) and not self._engine_killed:
                self._engine_killed = True
                self.bus.trace_action(self.name, "engine_shutdown", reason="bumper")
                self.publish(
                    topics.ENGINE_KILL, EngineKill(stamp_ns=now_ns, reason="bumper")
                )
        for m in self.take(topics.ENGINE_KILL):
            self._engine_killed = True

        accel, brake = good.accel, good.brake
        if self._halo_brake is not None:
            value, stamp = self._halo_brake
            if now_ns - stamp <= self.HALO_BRAKE_FRESH_NS:
                brake = max(brake, value)
                accel = 0.0
        if self._engine_killed:
            accel = 0.0
        self.publish(
            topics.ACTUATION,
            ActuationState(
                stamp_ns=now_ns,
                accelerator=accel,
                brake=brake,
                gear=good.gear,
                steering_deg=good.steering_deg,
            ),
        )
        self._tick_count += 1
        if self._tick_count % 5 == 0:
            self.publish(
                topics.heartbeat(self.name),
                Heartbeat(stamp_ns=now_ns, counter=self._hb_counter),
            )
            self._hb_counter += 1

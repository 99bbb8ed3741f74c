"""Fault-tolerant safety layer: four supervisory nodes.

* Graceful Stop: watches data freshness/accuracy ledgers and raises the
  stop flag (race-control link 25 s, base station 10 s, GNSS silence 500 ms,
  GNSS accuracy 0.35 m, diagnostics, plus the health monitor's own pulse).
* Node Health Monitor: heartbeat ledger over the six safety-critical nodes
  with an escalation ladder keyed to which stop mechanisms remain alive.
* Topic Multiplexer: picks the best localization stream (EKF preferred while
  its worst position variance stays at or below 0.35^2 = 0.1225; returning
  to the EKF needs 20 consecutive good messages) and the best race-flag
  stream (freshest valid source, race-control feed wins ties).
* Behavioral Monitor: flag-to-speed transitions (publish once per color
  change, purple kills the engine), coarse region tracking from polygon
  crossings, and the overtake "close the door" n-of-k merge decision.

Each node accepts disabled=True: the plumbing stays alive but the protective
logic is bypassed, which is how unmitigated-fault baselines are produced.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import topics
from .bus import Node
from .messages import (
    BrakeCommand,
    DesiredVelocity,
    EngineKill,
    FlagColor,
    FlagOrigin,
    Heartbeat,
    LocalPose,
    NoOdometrySignal,
    OperatorNotification,
    PathRequest,
    RaceFlag,
    Region,
    StopFlag,
    StopReason,
    StopRequest,
)
from .track import TrackModel, point_in_polygon


class CounterRegression(Exception):
    """A heartbeat counter moved backwards; nodes never restart in-sim."""


class UnknownFlagColor(Exception):
    """The speed table has no entry for a non-shutdown flag color."""


# -- data health gate ----------------------------------------------------------


def data_health_gate(
    value: float,
    lower: float,
    upper: float,
    accuracy: float | None = None,
    accuracy_limit: float | None = None,
) -> tuple[bool, str]:
    """Bounds check first, then accuracy; returns (ok, reject_reason).

    Rejection reasons: "limit" for out-of-bounds, "accuracy" for an
    accuracy figure worse than its threshold.
    """
    if not (lower <= value <= upper):
        return False, "limit"
    if accuracy is not None and accuracy_limit is not None:
        if accuracy > accuracy_limit:
            return False, "accuracy"
    return True, ""


# -- graceful stop --------------------------------------------------------------


@dataclass
class GsConfig:
    mylaps_timeout_s: float = 25.0
    basestation_timeout_s: float = 10.0
    gnss_silence_s: float = 0.5
    gnss_stddev_limit_m: float = 0.35
    monitor_timeout_s: float = 0.5
    external_fresh_s: float = 1.0


@dataclass
class GsLedger:
    """Freshness/accuracy bookkeeping for every channel the stop node owns."""

    last_mylaps_ns: int = 0
    last_joystick_ns: int = 0
    last_monitor_hb_ns: int = 0
    last_gnss_ns: dict[str, int] = field(default_factory=lambda: {"top": 0, "bottom": 0})
    gnss_stddev_m: dict[str, float] = field(
        default_factory=lambda: {"top": 0.0, "bottom": 0.0}
    )
    diagnostics_ok: bool = True
    diagnostics_code: int = 0


def gs_check(
    ledger: GsLedger, now_ns: int, config: GsConfig
) -> tuple[StopReason | None, str]:
    """Most severe failed check wins; order is fixed."""
    if not ledger.diagnostics_ok:
        return StopReason.DIAGNOSTICS_FAULT, f"code {ledger.diagnostics_code}"
    silence_ns = int(config.gnss_silence_s * 1e9)
    freshest_gnss = max(ledger.last_gnss_ns.values())
    if now_ns - freshest_gnss > silence_ns:
        return StopReason.GNSS_SILENCE, "all units silent"
    fresh_units = [
        unit
        for unit, stamp in ledger.last_gnss_ns.items()
        if now_ns - stamp <= silence_ns
    ]
    if fresh_units and all(
        ledger.gnss_stddev_m[u] >= config.gnss_stddev_limit_m for u in fresh_units
    ):
        worst = min(ledger.gnss_stddev_m[u] for u in fresh_units)
        return StopReason.GNSS_INACCURATE, f"stddev {worst:.3f} m"
    if now_ns - ledger.last_joystick_ns > int(config.basestation_timeout_s * 1e9):
        return StopReason.BASESTATION_TIMEOUT, "joystick silent"
    if now_ns - ledger.last_mylaps_ns > int(config.mylaps_timeout_s * 1e9):
        return StopReason.MYLAPS_TIMEOUT, "race flags silent"
    if now_ns - ledger.last_monitor_hb_ns > int(config.monitor_timeout_s * 1e9):
        return StopReason.MONITOR_SILENT, "node health monitor silent"
    return None, ""


class GracefulStopNode(Node):
    name = "graceful_stop"
    rate_hz = 100.0
    subscribes = (
        topics.MYLAPS_FLAGS,
        topics.JOYSTICK,
        topics.GNSS_TOP,
        topics.GNSS_BOTTOM,
        topics.DIAGNOSTICS,
        topics.STOP_REQUEST,
        topics.NO_ODOM,
        topics.heartbeat("node_health_monitor"),
    )
    publishes = (topics.STOP_FLAG, topics.heartbeat("graceful_stop"))

    def __init__(self, config: GsConfig | None = None, disabled: bool = False) -> None:
        self.config = config or GsConfig()
        self.disabled = disabled
        self.ledger = GsLedger()
        self._external: tuple[StopReason, str, int] | None = None
        self._active_reason: StopReason | None = None
        self._hb_counter = 0
        self._tick_count = 0

    def tick(self, now_ns: int) -> None:
        ledger = self.ledger
        for m in self.take(topics.MYLAPS_FLAGS):
            ledger.last_mylaps_ns = m.stamp_ns
        for m in self.take(topics.JOYSTICK):
            ledger.last_joystick_ns = m.stamp_ns
        for unit, topic in (("top", topics.GNSS_TOP), ("bottom", topics.GNSS_BOTTOM)):
            for m in self.take(topic):
                ledger.last_gnss_ns[unit] = m.stamp_ns
                ledger.gnss_stddev_m[unit] = max(
                    m.payload.lat_stddev_m, m.payload.lon_stddev_m
                )
        for m in self.take(topics.DIAGNOSTICS):
            ledger.diagnostics_ok = m.payload.ok
            ledger.diagnostics_code = m.payload.code
        for m in self.take(topics.heartbeat("node_health_monitor")):
            ledger.last_monitor_hb_ns = m.stamp_ns
        for m in self.take(topics.STOP_REQUEST):
            self._external = (m.payload.reason, m.payload.detail, m.stamp_ns)
        for m in self.take(topics.NO_ODOM):
            self._external = (StopReason.NO_ODOMETRY, "no localization source", m.stamp_ns)

        if self.disabled:
            self._emit_heartbeat(now_ns)
            return

        reason, detail = gs_check(ledger, now_ns, self.config)
        if reason is None and self._external is not None:
            ext_reason, ext_detail, ext_stamp = self._external
            if now_ns - ext_stamp <= int(self.config.external_fresh_s * 1e9):
                reason, detail = ext_reason, ext_detail
        if reason is not None:
            if reason is not self._active_reason:
                self.bus.trace_action(
                    self.name, "graceful_stop", reason=reason.value, detail=detail
                )
            self.publish(
                topics.STOP_FLAG,
                StopFlag(stamp_ns=now_ns, engaged=True, reason=reason, detail=detail),
            )
        self._active_reason = reason
        self._emit_heartbeat(now_ns)

    def _emit_heartbeat(self, now_ns: int) -> None:
        self._tick_count += 1
        if self._tick_count % 5 == 0:
            self.publish(
                topics.heartbeat(self.name),
                Heartbeat(stamp_ns=now_ns, counter=self._hb_counter),
            )
            self._hb_counter += 1


# -- node health monitor ---------------------------------------------------------


@dataclass(frozen=True)
class NodeHealth:
    last_hb_ns: int = 0
    last_counter: int = -1
    missed: int = 0


def nh_on_heartbeat(health: NodeHealth, counter: int, now_ns: int) -> NodeHealth:
    """Fold one heartbeat into the ledger, counting skipped beats."""
    if counter < health.last_counter:
        raise CounterRegression(f"{counter} < {health.last_counter}")
    gap = 0 if health.last_counter < 0 else counter - health.last_counter - 1
    return NodeHealth(
        last_hb_ns=now_ns,
        last_counter=counter,
        missed=health.missed + max(0, gap),
    )


def nh_escalation(dead: frozenset[str]) -> tuple[str, ...]:
    """Escalation ladder: defined for every subset of the monitored six.

    When the control/stop chain is damaged, pick the strongest stop route
    whose remaining links are all alive: ask the stop node (needs the stop
    node, velocity control, and the actuation interface), else command
    zero velocity directly (needs velocity control and actuation), else
    brake through the actuation interface, else kill the engine.  The mux
    and the detector get dedicated responses.
    """
    actions: list[str] = []
    if "topic_multiplexer" in dead:
        actions.append("take_over_mux")
    if "lidar" in dead:
        actions.append("notify_operator")
    if dead & {"long_control", "path_tracker", "ssc_interface", "graceful_stop"}:
        route_ok = lambda *needs: not (dead & set(needs))  # noqa: E731
        if route_ok("graceful_stop", "long_control", "ssc_interface"):
            actions.append("request_graceful_stop")
        elif route_ok("long_control", "ssc_interface"):
            actions.append("zero_velocity")
        elif route_ok("ssc_interface"):
            actions.append("direct_brake")
        else:
            actions.append("engine_shutdown")
    return tuple(actions)


def nh_tick(
    ledger: dict[str, NodeHealth], now_ns: int, timeout_ns: int
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """(dead nodes, escalation actions) for the ledger at one instant."""
    dead = tuple(
        name
        for name in topics.MONITORED_NODES
        if now_ns - ledger[name].last_hb_ns > timeout_ns
    )
    return dead, nh_escalation(frozenset(dead))


@dataclass
class NhConfig:
    heartbeat_timeout_s: float = 0.5
    direct_brake: float = 0.4
    bridge_fresh_s: float = 0.2  # GNSS freshness while acting as the mux


class NodeHealthMonitorNode(Node):
    name = "node_health_monitor"
    rate_hz = 100.0
    subscribes = tuple(topics.heartbeat(n) for n in topics.MONITORED_NODES) + (
        topics.CARTESIAN_TOP,
        topics.CARTESIAN_BOTTOM,
    )
    publishes = (
        topics.STOP_REQUEST,
        topics.DESIRED_VELOCITY,
        topics.HALO_BRAKE,
        topics.ENGINE_KILL,
        topics.OPERATOR_NOTE,
        topics.BEST_ODOM,
        topics.NO_ODOM,
        topics.heartbeat("node_health_monitor"),
    )

    def __init__(self, config: NhConfig | None = None, disabled: bool = False) -> None:
        self.config = config or NhConfig()
        self.disabled = disabled
        self.ledger: dict[str, NodeHealth] = {
            n: NodeHealth() for n in topics.MONITORED_NODES
        }
        self._active_actions: tuple[str, ...] = ()
        self._bridging = False
        self._bridge_poses: dict[str, LocalPose] = {}
        self._bridge_last_pub: tuple[str, int] | None = None
        self._bridge_starved = False
        self._engine_killed = False
        self._notified = False
        self._hb_counter = 0
        self._tick_count = 0

    def tick(self, now_ns: int) -> None:
        for node in topics.MONITORED_NODES:
            for m in self.take(topics.heartbeat(node)):
                self.ledger[node] = nh_on_heartbeat(
                    self.ledger[node], m.payload.counter, m.stamp_ns
                )
        for topic in (topics.CARTESIAN_TOP, topics.CARTESIAN_BOTTOM):
            for m in self.take(topic):
                self._bridge_poses[m.payload.source.value] = m.payload

        timeout_ns = int(self.config.heartbeat_timeout_s * 1e9)
        dead, actions = nh_tick(self.ledger, now_ns, timeout_ns)
        if self.disabled:
            actions = ()
        for action in actions:
            if action not in self._active_actions:
                self.bus.trace_action(self.name, action, dead=",".join(dead))
        self._active_actions = actions

        detail = ",".join(dead)
        for action in actions:
            if action == "take_over_mux":
                self._bridging = True
            elif action == "request_graceful_stop":
                self.publish(
                    topics.STOP_REQUEST,
                    StopRequest(
                        stamp_ns=now_ns, reason=StopReason.NODE_FAULT, detail=detail
                    ),
                )
            elif action == "zero_velocity":
                self.publish(
                    topics.DESIRED_VELOCITY,
                    DesiredVelocity(stamp_ns=now_ns, speed_mps=0.0, source=self.name),
                )
            elif action == "direct_brake":
                self.publish(
                    topics.HALO_BRAKE,
                    BrakeCommand(stamp_ns=now_ns, brake=self.config.direct_brake),
                )
            elif action == "engine_shutdown" and not self._engine_killed:
                self._engine_killed = True
                self.publish(
                    topics.ENGINE_KILL,
                    EngineKill(stamp_ns=now_ns, reason=f"node_fault:{detail}"),
                )
            elif action == "notify_operator" and not self._notified:
                self._notified = True
                self.publish(
                    topics.OPERATOR_NOTE,
                    OperatorNotification(
                        stamp_ns=now_ns, message=f"perception offline: {detail}"
                    ),
                )
        if "take_over_mux" not in actions:
            self._bridging = False

        if self._bridging:
            self._bridge_tick(now_ns)
        self._tick_count += 1
        if self._tick_count % 5 == 0:
            self.publish(
                topics.heartbeat(self.name),
                Heartbeat(stamp_ns=now_ns, counter=self._hb_counter),
            )
            self._hb_counter += 1

    def _bridge_tick(self, now_ns: int) -> None:
        """Stand-in mux duty: republish the better fresh GNSS-unit pose."""
        fresh_ns = int(self.config.bridge_fresh_s * 1e9)
        fresh = [
            p for p in self._bridge_poses.values() if now_ns - p.stamp_ns <= fresh_ns
        ]
        if not fresh:
            if not self._bridge_starved:
                self.bus.trace_action(self.name, "no_odometry", bridging=True)
            self._bridge_starved = True
            self.publish(topics.NO_ODOM, NoOdometrySignal(stamp_ns=now_ns))
            return
        self._bridge_starved = False
        fresh.sort(key=lambda p: (p.scalar_cov, p.source.value != "gnss_top"))
        best = fresh[0]
        key = (best.source.value, best.stamp_ns)
        if key != self._bridge_last_pub:
            self._bridge_last_pub = key
            self.publish(topics.BEST_ODOM, best)


# -- topic multiplexer -------------------------------------------------------------


@dataclass
class MuxConfig:
    cov_threshold: float = 0.1225  # 0.35 m stddev squared
    required_streak: int = 20
    ekf_fresh_s: float = 0.1
    gnss_fresh_s: float = 0.2
    flag_valid_s: float = 25.0


@dataclass(frozen=True)
class MuxState:
    # "ekf" | "gnss_top" | "gnss_bottom" | "none"
    source: str = "ekf"
    streak: int = 0


def mux_observe_ekf(state: MuxState, good: bool) -> MuxState:
    return replace(state, streak=state.streak + 1 if good else 0)


def mux_select(
    state: MuxState,
    ekf: LocalPose | None,
    top: LocalPose | None,
    bottom: LocalPose | None,
    now_ns: int,
    config: MuxConfig,
) -> tuple[LocalPose | None, MuxState]:
    """Pick the localization source for this instant.

    Returns (pose, state'); pose is None when every source is stale, in
    which case state'.source == "none".  A fresh filter estimate above the
    covariance threshold is treated like a missing one, except that it has
    already reset the recovery streak (mux_observe_ekf).

    A source never heard from ages from t=0, so early startup (before
    anything has published) counts as fresh silence, not loss.
    """
    ekf_fresh_ns = int(config.ekf_fresh_s * 1e9)
    gnss_fresh_ns = int(config.gnss_fresh_s * 1e9)
    ekf_fresh = now_ns - (ekf.stamp_ns if ekf else 0) <= ekf_fresh_ns
    if not ekf_fresh:
        state = replace(state, streak=0)
    ekf_good = ekf_fresh and (ekf is None or ekf.scalar_cov <= config.cov_threshold)

    if ekf_good and (
        state.source == "ekf" or state.streak >= config.required_streak
    ):
        return ekf, replace(state, source="ekf")

    candidates = [
        pose
        for pose in (top, bottom)
        if pose is not None and now_ns - pose.stamp_ns <= gnss_fresh_ns
    ]
    if candidates:
        # Better accuracy wins; the top unit wins exact ties.
        candidates.sort(key=lambda p: (p.scalar_cov, p.source.value != "gnss_top"))
        best = candidates[0]
        return best, replace(state, source=best.source.value)
    if now_ns <= gnss_fresh_ns and top is None and bottom is None:
        # GNSS paths quiet since boot: silence grace, keep the prior source.
        return None, state
    return None, replace(state, source="none")


class TopicMultiplexerNode(Node):
    name = "topic_multiplexer"
    rate_hz = 100.0
    subscribes = (
        topics.EKF_ODOM,
        topics.CARTESIAN_TOP,
        topics.CARTESIAN_BOTTOM,
        topics.MYLAPS_FLAGS,
        topics.SPOOFED_FLAGS,
    )
    publishes = (
        topics.BEST_ODOM,
        topics.NO_ODOM,
        topics.BEST_FLAGS,
        topics.heartbeat("topic_multiplexer"),
    )

    def __init__(self, config: MuxConfig | None = None, disabled: bool = False) -> None:
        self.config = config or MuxConfig()
        self.disabled = disabled
        self.state = MuxState()
        self._latest: dict[str, LocalPose | None] = {
            "ekf": None,
            "top": None,
            "bottom": None,
        }
        self._last_pub: tuple[str, int] | None = None
        self._flags: dict[FlagOrigin, RaceFlag] = {}
        self._last_flag_pub: tuple[str, int] | None = None
        self._hb_counter = 0
        self._tick_count = 0

    def tick(self, now_ns: int) -> None:
        new_ekf = self.take(topics.EKF_ODOM)
        for m in new_ekf:
            self._latest["ekf"] = m.payload
            if not self.disabled:
                good = m.payload.scalar_cov <= self.config.cov_threshold
                self.state = mux_observe_ekf(self.state, good)
        for m in self.take(topics.CARTESIAN_TOP):
            self._latest["top"] = m.payload
        for m in self.take(topics.CARTESIAN_BOTTOM):
            self._latest["bottom"] = m.payload

        if self.disabled:
            # Raw passthrough of the filter output: no covariance protection.
            if new_ekf:
                self._publish_pose(new_ekf[-1].payload)
        else:
            self._select_and_publish(now_ns)
        self._flag_tick(now_ns)
        self._tick_count += 1
        if self._tick_count % 5 == 0:
            self.publish(
                topics.heartbeat(self.name),
                Heartbeat(stamp_ns=now_ns, counter=self._hb_counter),
            )
            self._hb_counter += 1

    def _select_and_publish(self, now_ns: int) -> None:
        previous = self.state.source
        pose, self.state = mux_select(
            self.state,
            self._latest["ekf"],
            self._latest["top"],
            self._latest["bottom"],
            now_ns,
            self.config,
        )
        source = self.state.source
        if source != previous:
            if previous == "ekf":
                ekf = self._latest["ekf"]
                self.bus.trace_action(
                    self.name,
                    "mux_fallback",
                    to=source,
                    ekf_cov=ekf.scalar_cov if ekf else None,
                )
            if source == "ekf":
                self.bus.trace_action(self.name, "mux_reselect", streak=self.state.streak)
            if source == "none":
                self.bus.trace_action(self.name, "no_odometry", bridging=False)
        if source == "none":
            self.publish(topics.NO_ODOM, NoOdometrySignal(stamp_ns=now_ns))
        elif pose is not None:
            self._publish_pose(pose)

    def _publish_pose(self, pose: LocalPose) -> None:
        key = (pose.source.value, pose.stamp_ns)
        if key != self._last_pub:
            self._last_pub = key
            self.publish(topics.BEST_ODOM, pose)

    def _flag_tick(self, now_ns: int) -> None:
        for m in self.take(topics.MYLAPS_FLAGS):
            self._flags[FlagOrigin.MYLAPS] = m.payload
        for m in self.take(topics.SPOOFED_FLAGS):
            self._flags[FlagOrigin.SPOOFED] = m.payload
        valid_ns = int(self.config.flag_valid_s * 1e9)
        candidates = [
            f for f in self._flags.values() if now_ns - f.stamp_ns <= valid_ns
        ]
        if not candidates:
            return
        # Freshest valid source wins; the race-control feed wins stamp ties.
        candidates.sort(
            key=lambda f: (-f.stamp_ns, f.origin is not FlagOrigin.MYLAPS)
        )
        best = candidates[0]
        key = (best.origin.value, best.stamp_ns)
        if key != self._last_flag_pub:
            self._last_flag_pub = key
            self.publish(topics.BEST_FLAGS, best)


# -- behavioral monitor --------------------------------------------------------------


# Crossing into a polygon moves the coarse region state.
REGION_OF_POLYGON = {
    "pit_entry": Region.PIT_LANE,
    "pit_slowdown": Region.PIT_BOX_ZONE,
    "speed_up": Region.PIT_LANE,
    "pit_exit": Region.ON_TRACK,
    "passing_zone_start": Region.PASSING_ZONE,
    "passing_zone_end": Region.ON_TRACK,
}


def flag_speed(
    table: dict[str, float | dict[str, float]], color: FlagColor, region: Region
) -> float:
    if color.value not in table:
        raise UnknownFlagColor(color.value)
    entry = table[color.value]
    if isinstance(entry, dict):
        return float(entry.get(region.value, entry["default"]))
    return float(entry)


def flag_transition(
    prev_color: FlagColor | None,
    color: FlagColor,
    region: Region,
    table: dict[str, float | dict[str, float]],
) -> tuple[str, float | None]:
    """("none"|"speed"|"kill", target speed).  Acts only on color changes."""
    if color == prev_color:
        return "none", None
    if color is FlagColor.PURPLE:
        return "kill", None
    return "speed", flag_speed(table, color, region)


@dataclass
class DoorConfig:
    window: int = 10  # k
    required: int = 8  # n
    separation_bound_m: float = -30.0


def close_the_door(
    readings: deque, reading_m: float, config: DoorConfig, naive: bool
) -> bool:
    """Fold one detection into the window; True when the merge may fire.

    Silence contributes nothing: only actual readings enter the window.
    The naive variant (protection disabled) fires on the first reading past
    the bound.
    """
    readings.append(reading_m)
    if naive:
        return reading_m <= config.separation_bound_m
    hits = sum(1 for r in readings if r <= config.separation_bound_m)
    return hits >= config.required


class BehavioralMonitorNode(Node):
    name = "behavioral_monitor"
    rate_hz = 20.0
    subscribes = (topics.BEST_FLAGS, topics.BEST_ODOM, topics.DETECTIONS)
    publishes = (
        topics.DESIRED_VELOCITY,
        topics.PATH_REQUEST,
        topics.ENGINE_KILL,
    )

    def __init__(
        self,
        track: TrackModel,
        speed_table: dict[str, float | dict[str, float]],
        door: DoorConfig | None = None,
        overtake_path: str = "overtake",
        merge_path: str = "raceline",
        disabled: bool = False,
    ) -> None:
        self.track = track
        self.speed_table = speed_table
        self.door = door or DoorConfig()
        self.overtake_path = overtake_path
        self.merge_path = merge_path
        self.disabled = disabled
        self.region = Region.ON_TRACK
        self._prev_color: FlagColor | None = None
        self._inside: dict[str, bool] = {name: False for name in track.polygons}
        self._window: deque = deque(maxlen=self.door.window)
        self._overtaking = False
        self._merged = False

    def tick(self, now_ns: int) -> None:
        for m in self.take(topics.BEST_ODOM):
            self._update_region(m.payload)
        for m in self.take(topics.BEST_FLAGS):
            self._handle_flag(m.payload, now_ns)
        for m in self.take(topics.DETECTIONS):
            self._handle_detection(m.payload, now_ns)

    # region tracking

    def _update_region(self, pose: LocalPose) -> None:
        point = np.array([pose.x_m, pose.y_m])
        for name, polygon in self.track.polygons.items():
            inside = point_in_polygon(point, polygon)
            if inside and not self._inside[name]:
                new_region = REGION_OF_POLYGON.get(name)
                if new_region is not None and new_region is not self.region:
                    self.region = new_region
                    self.bus.trace_action(
                        self.name, "region_change", region=new_region.value, gate=name
                    )
            self._inside[name] = inside

    # flags

    def _handle_flag(self, flag: RaceFlag, now_ns: int) -> None:
        action, speed = flag_transition(
            self._prev_color, flag.color, self.region, self.speed_table
        )
        self._prev_color = flag.color
        if action == "kill":
            self.bus.trace_action(self.name, "engine_shutdown", reason="purple_flag")
            self.publish(
                topics.ENGINE_KILL, EngineKill(stamp_ns=now_ns, reason="purple_flag")
            )
            return
        if action == "speed":
            self.bus.trace_action(
                self.name,
                "flag_speed",
                color=flag.color.value,
                region=self.region.value,
                speed_mps=speed,
            )
            self.publish(
                topics.DESIRED_VELOCITY,
                DesiredVelocity(stamp_ns=now_ns, speed_mps=speed, source=self.name),
            )
            if flag.color is FlagColor.WAVING_GREEN and not self._overtaking:
                self._overtaking = True
                self._merged = False
                self._window.clear()
                self.bus.trace_action(self.name, "overtake_start", path=self.overtake_path)
                self.publish(
                    topics.PATH_REQUEST,
                    PathRequest(
                        stamp_ns=now_ns, path=self.overtake_path, reason="waving_green"
                    ),
                )

    # close the door

    def _handle_detection(self, detection, now_ns: int) -> None:
        if not self._overtaking or self._merged:
            return
        merge = close_the_door(
            self._window, detection.separation_m, self.door, naive=self.disabled
        )
        if merge:
            self._merged = True
            self._overtaking = False
            hits = sum(
                1 for r in self._window if r <= self.door.separation_bound_m
            )
            self.bus.trace_action(
                self.name,
                "close_door_merge",
                hits=hits,
                window=len(self._window),
                bound_m=self.door.separation_bound_m,
            )
            self.publish(
                topics.PATH_REQUEST,
                PathRequest(stamp_ns=now_ns, path=self.merge_path, reason="close_door"),
            )

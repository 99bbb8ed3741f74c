"""Builds a full vehicle stack from a scenario, injects its faults, runs it.

The wiring here is the reference topology: plant and sensors feeding two
geodetic-to-cartesian converters and the fusion filter, the four safety
nodes, the velocity/steering controllers, and the drive-by-wire boundary.
Faults are scheduler callbacks so they land at exact virtual times and are
recorded as trace events when they fire.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import topics
from .bus import NANOS_PER_SEC, Bus, NodeStatus
from .comm import FlagFeedNode, JoystickNode, JoystickScript, SscInterfaceNode, TelemetryNode
from .control import LongControlNode, PathSet, PathTrackerNode
from .halo import (
    BehavioralMonitorNode,
    DoorConfig,
    GracefulStopNode,
    GsConfig,
    MuxConfig,
    NhConfig,
    NodeHealthMonitorNode,
    TopicMultiplexerNode,
)
from .localization import EkfNode, MapBaselinkNode
from .messages import FlagOrigin
from .metrics import MetricsReport, compute_metrics
from .perception import BurstWindow, DetectionModel, LidarNode
from .plant import (
    GnssUnitNode,
    ImuNode,
    OpponentConfig,
    PlantNode,
    RaptorDbwNode,
    SensorNoise,
    VehicleParams,
    World,
)
from .scenario import ConfigError, FaultSpec, Scenario
from .track import build_default_track, load_track
from .trace import TraceLog

# Names accepted by --disable-halo-node; each switches one protection off.
DISABLEABLE_NODES = (
    "graceful_stop",
    "node_health_monitor",
    "topic_multiplexer",
    "behavioral_monitor",
)

# Shorthand accepted on the command line and in scenario files.
_DISABLE_ALIASES = {
    "behavioral": "behavioral_monitor",
    "mux": "topic_multiplexer",
    "node_health": "node_health_monitor",
}


@dataclass
class RunResult:
    scenario: Scenario
    trace: TraceLog
    metrics: MetricsReport
    bus: Bus
    world: World


def _sensor_noise(raw: dict) -> SensorNoise:
    raw = dict(raw)
    dropouts = {
        unit: [(float(a), float(b)) for a, b in windows]
        for unit, windows in raw.pop("gnss_dropouts", {}).items()
    }
    return SensorNoise(gnss_dropouts=dropouts, **raw)


def build_stack(
    scenario: Scenario, disable_halo_node: str | None = None
) -> tuple[Bus, World, dict]:
    disable = disable_halo_node or scenario.disable_halo_node
    if disable is not None:
        disable = _DISABLE_ALIASES.get(disable, disable)
        if disable not in DISABLEABLE_NODES:
            raise ConfigError(
                f"disable_halo_node: {disable!r} is not one of {DISABLEABLE_NODES}"
            )

    track = (
        load_track(scenario.track_file)
        if scenario.track_file
        else build_default_track()
    )
    world = World(
        track=track,
        params=VehicleParams(),
        ego_path=scenario.ego.path,
        ego_start_s=scenario.ego.start_arclength_m,
        ego_speed=scenario.ego.initial_speed_mps,
        opponent=OpponentConfig(
            enabled=scenario.opponent.enabled,
            speed_mps=scenario.opponent.speed_mps,
            start_arclength_m=scenario.opponent.start_arclength_m,
            path=scenario.opponent.path,
        ),
    )
    noise = _sensor_noise(scenario.sensors)

    bus = Bus(seed=scenario.seed)
    topics.register_all(bus)

    nodes = {
        "plant": PlantNode(world, scenario.ego.path),
        "gnss_top": GnssUnitNode("top", world, noise),
        "gnss_bottom": GnssUnitNode("bottom", world, noise),
        "imu": ImuNode(world, noise),
        "raptor_dbw": RaptorDbwNode(world, noise),
        "map_baselink_top": MapBaselinkNode("top", track.origin_lat_deg, track.origin_lon_deg),
        "map_baselink_bottom": MapBaselinkNode(
            "bottom", track.origin_lat_deg, track.origin_lon_deg
        ),
        "ekf": EkfNode(),
        "topic_multiplexer": TopicMultiplexerNode(
            MuxConfig(**scenario.mux), disabled=disable == "topic_multiplexer"
        ),
        "graceful_stop": GracefulStopNode(
            GsConfig(**scenario.graceful_stop), disabled=disable == "graceful_stop"
        ),
        "node_health_monitor": NodeHealthMonitorNode(
            NhConfig(**scenario.node_health), disabled=disable == "node_health_monitor"
        ),
        "behavioral_monitor": BehavioralMonitorNode(
            track,
            scenario.speed_table,
            DoorConfig(**scenario.door),
            disabled=disable == "behavioral_monitor",
        ),
        "long_control": LongControlNode(initial_desired_mps=scenario.ego.desired_speed_mps),
        "path_tracker": PathTrackerNode(
            PathSet(paths=track.paths, active=scenario.ego.path)
        ),
        "ssc_interface": SscInterfaceNode(),
        "lidar": LidarNode(world, DetectionModel(**scenario.perception)),
        "mylaps_feed": FlagFeedNode(world, scenario.flag_schedule),
        "joystick_link": JoystickNode(world, JoystickScript(**scenario.joystick)),
        "telemetry": TelemetryNode(),
    }
    if scenario.spoofed_schedule:
        nodes["spoofed_feed"] = FlagFeedNode(
            world,
            scenario.spoofed_schedule,
            name="spoofed_feed",
            topic=topics.SPOOFED_FLAGS,
            origin=FlagOrigin.SPOOFED,
            link="basestation",
        )
    for node in nodes.values():
        bus.add_node(node)
    _schedule_faults(bus, world, nodes, scenario.faults)
    return bus, world, nodes


def _schedule_faults(bus: Bus, world: World, nodes: dict, faults: list[FaultSpec]) -> None:
    for spec in faults:
        at_ns = int(round(spec.at_s * NANOS_PER_SEC))
        bus.schedule_callback(at_ns, _fault_applier(spec, world, nodes))


def _fault_applier(spec: FaultSpec, world: World, nodes: dict):
    p = spec.params

    def apply(bus: Bus) -> None:
        now = bus.now_ns

        def record(**fields) -> None:
            bus.trace_fault(spec.kind, fault_class=spec.fault_class, **fields)

        if spec.kind == "node_crash":
            record(node=p["node"])
            bus.inject_liveness(p["node"], NodeStatus.CRASHED)
        elif spec.kind == "node_stall":
            dur = int(float(p["duration_s"]) * NANOS_PER_SEC)
            record(node=p["node"], duration_s=p["duration_s"])
            bus.inject_liveness(p["node"], NodeStatus.STALLED, stall_duration_ns=dur)
        elif spec.kind == "topic_drop":
            dur = int(float(p["duration_s"]) * NANOS_PER_SEC)
            record(topic=p["topic"], duration_s=p["duration_s"])
            bus.set_topic_drop(p["topic"], now + dur)
        elif spec.kind == "message_delay":
            delay = int(float(p["delay_s"]) * NANOS_PER_SEC)
            record(topic=p["topic"], delay_s=p["delay_s"])
            bus.set_topic_delay(p["topic"], delay)
        elif spec.kind == "value_corrupt":
            record(topic=p["topic"], field=p["field"], value=p["value"])
            bus.set_value_corrupt(p["topic"], p["field"], p["value"])
            if "duration_s" in p:
                clear_at = now + int(float(p["duration_s"]) * NANOS_PER_SEC)
                bus.schedule_callback(
                    clear_at, lambda b, topic=p["topic"]: b.clear_value_corrupt(topic)
                )
        elif spec.kind == "cov_inflate":
            ramp = int(float(p["ramp_s"]) * NANOS_PER_SEC)
            record(ramp_s=p["ramp_s"], factor=p.get("factor"), target=p.get("target"))
            nodes["ekf"].set_inflate_fault(
                start_ns=now,
                ramp_ns=ramp,
                factor=p.get("factor"),
                target=p.get("target"),
            )
        elif spec.kind == "detection_burst":
            dur = int(float(p["duration_s"]) * NANOS_PER_SEC)
            lidar: LidarNode = nodes["lidar"]
            base = lidar.model
            model = DetectionModel(
                fn_rate=float(p.get("fn_rate", base.fn_rate)),
                fp_rate=float(p["fp_rate"]),
                noise_stddev_m=float(p.get("noise_stddev_m", base.noise_stddev_m)),
                fp_dist=p.get("fp_dist", base.fp_dist),
            )
            record(duration_s=p["duration_s"], fp_rate=p["fp_rate"])
            lidar.add_burst(BurstWindow(start_ns=now, end_ns=now + dur, model=model))
        elif spec.kind == "radio_dead_arc":
            record(link=p["link"], start_s=p["start_s"], end_s=p["end_s"])
            world.track.dead_arcs.setdefault(p["link"], []).append(
                (float(p["start_s"]), float(p["end_s"]))
            )
        elif spec.kind == "diagnostics_error":
            record(code=p["code"])
            nodes["raptor_dbw"].forced_fault_code = int(p["code"])
            if "duration_s" in p:
                clear_at = now + int(float(p["duration_s"]) * NANOS_PER_SEC)

                def clear(b: Bus, node=nodes["raptor_dbw"]) -> None:
                    node.forced_fault_code = 0

                bus.schedule_callback(clear_at, clear)
        else:  # pragma: no cover - scenario validation rejects unknown kinds
            raise ConfigError(f"unhandled fault kind {spec.kind!r}")

    return apply


def run_scenario(
    scenario: Scenario, disable_halo_node: str | None = None
) -> RunResult:
    bus, world, nodes = build_stack(scenario, disable_halo_node)
    bus.run_until(int(round(scenario.duration_s * NANOS_PER_SEC)))
    metrics = compute_metrics(bus.trace, scenario.duration_s)
    return RunResult(
        scenario=scenario, trace=bus.trace, metrics=metrics, bus=bus, world=world
    )

"""Canonical topic names and payload-type registry for the simulated stack."""
from __future__ import annotations

from . import messages as m

GNSS_TOP = "sensor/gnss_top"
GNSS_BOTTOM = "sensor/gnss_bottom"
IMU = "sensor/imu"
WHEEL_SPEED = "sensor/wheel_speed"
ENGINE = "sensor/engine"
DIAGNOSTICS = "sensor/diagnostics"

CARTESIAN_TOP = "loc/cartesian_top"
CARTESIAN_BOTTOM = "loc/cartesian_bottom"
EKF_ODOM = "loc/ekf_odometry"

BEST_ODOM = "halo/best_odometry"
NO_ODOM = "halo/no_odometry"
BEST_FLAGS = "halo/best_flags"
STOP_REQUEST = "halo/stop_request"
STOP_FLAG = "halo/stop_flag"
OPERATOR_NOTE = "halo/operator_note"

MYLAPS_FLAGS = "comm/mylaps_flags"
SPOOFED_FLAGS = "comm/spoofed_flags"
JOYSTICK = "comm/joystick"
TELEMETRY = "comm/telemetry"

DETECTIONS = "perception/detections"

DESIRED_VELOCITY = "control/desired_velocity"
PATH_REQUEST = "control/path_request"
PATH_STATUS = "control/path_status"
LONG_CMD = "cmd/longitudinal"
STEER_CMD = "cmd/steering"
HALO_BRAKE = "cmd/halo_brake"

ACTUATION = "dbw/actuation"
ENGINE_KILL = "dbw/engine_kill"

TRUTH = "truth/state"


def heartbeat(node_name: str) -> str:
    return f"hb/{node_name}"


# Nodes watched by the node-health monitor; each publishes on hb/<name>.
MONITORED_NODES = (
    "long_control",
    "path_tracker",
    "ssc_interface",
    "lidar",
    "topic_multiplexer",
    "graceful_stop",
)

HEARTBEAT_PUBLISHERS = MONITORED_NODES + ("node_health_monitor",)

PAYLOAD_TYPES: dict[str, type] = {
    GNSS_TOP: m.GnssFix,
    GNSS_BOTTOM: m.GnssFix,
    IMU: m.ImuSample,
    WHEEL_SPEED: m.WheelSpeedReport,
    ENGINE: m.EngineReport,
    DIAGNOSTICS: m.DiagnosticsReport,
    CARTESIAN_TOP: m.LocalPose,
    CARTESIAN_BOTTOM: m.LocalPose,
    EKF_ODOM: m.LocalPose,
    BEST_ODOM: m.LocalPose,
    NO_ODOM: m.NoOdometrySignal,
    BEST_FLAGS: m.RaceFlag,
    STOP_REQUEST: m.StopRequest,
    STOP_FLAG: m.StopFlag,
    OPERATOR_NOTE: m.OperatorNotification,
    MYLAPS_FLAGS: m.RaceFlag,
    SPOOFED_FLAGS: m.RaceFlag,
    JOYSTICK: m.JoystickMessage,
    TELEMETRY: m.TelemetrySnapshot,
    DETECTIONS: m.Detection,
    DESIRED_VELOCITY: m.DesiredVelocity,
    PATH_REQUEST: m.PathRequest,
    PATH_STATUS: m.PathStatus,
    LONG_CMD: m.LongitudinalCommand,
    STEER_CMD: m.SteeringCommand,
    HALO_BRAKE: m.BrakeCommand,
    ACTUATION: m.ActuationState,
    ENGINE_KILL: m.EngineKill,
    TRUTH: m.TruthRecord,
}

for _node in HEARTBEAT_PUBLISHERS:
    PAYLOAD_TYPES[heartbeat(_node)] = m.Heartbeat


def register_all(bus) -> None:
    for topic, payload_type in PAYLOAD_TYPES.items():
        bus.register_topic(topic, payload_type)

"""Payload types carried on the simulated bus.

Every payload is a frozen dataclass so a published message can never be
mutated by a subscriber; fault injection that corrupts values does so by
replacing the payload, not editing it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass


class FlagColor(enum.Enum):
    GREEN = "green"
    WAVING_GREEN = "waving_green"
    YELLOW = "yellow"
    RED = "red"
    PURPLE = "purple"


class FlagOrigin(enum.Enum):
    MYLAPS = "mylaps"
    SPOOFED = "spoofed"


class PoseSource(enum.Enum):
    GNSS_TOP = "gnss_top"
    GNSS_BOTTOM = "gnss_bottom"
    EKF = "ekf"


class Region(enum.Enum):
    ON_TRACK = "on_track"
    PIT_LANE = "pit_lane"
    PIT_BOX_ZONE = "pit_box_zone"
    PASSING_ZONE = "passing_zone"


class StopReason(enum.Enum):
    DIAGNOSTICS_FAULT = "diagnostics_fault"
    GNSS_SILENCE = "gnss_silence"
    GNSS_INACCURATE = "gnss_inaccurate"
    BASESTATION_TIMEOUT = "basestation_timeout"
    MYLAPS_TIMEOUT = "mylaps_timeout"
    MONITOR_SILENT = "monitor_silent"
    NO_ODOMETRY = "no_odometry"
    NODE_FAULT = "node_fault"


# Reasons the vehicle may recover from once the condition clears; the rest
# require manual recovery.
RECOVERABLE_REASONS = frozenset(
    {
        StopReason.GNSS_SILENCE,
        StopReason.GNSS_INACCURATE,
        StopReason.BASESTATION_TIMEOUT,
        StopReason.MYLAPS_TIMEOUT,
        StopReason.NO_ODOMETRY,
    }
)


@dataclass(frozen=True, slots=True)
class GnssFix:
    """Raw geodetic fix from one GNSS unit."""

    stamp_ns: int
    lat_deg: float
    lon_deg: float
    lat_stddev_m: float
    lon_stddev_m: float
    unit: str  # "top" | "bottom"


@dataclass(frozen=True, slots=True)
class ImuSample:
    stamp_ns: int
    accel_mps2: float  # longitudinal
    yaw_rate_rps: float


@dataclass(frozen=True, slots=True)
class WheelSpeedReport:
    stamp_ns: int
    speed_mps: float


@dataclass(frozen=True, slots=True)
class EngineReport:
    stamp_ns: int
    rpm: float
    coolant_temp_c: float
    running: bool


@dataclass(frozen=True, slots=True)
class DiagnosticsReport:
    """Low-level platform self-check; ok must equal (code == 0)."""

    stamp_ns: int
    ok: bool
    code: int  # 0 when ok


@dataclass(frozen=True, slots=True)
class LocalPose:
    """Cartesian pose in the track-local frame (x north, y east)."""

    stamp_ns: int
    x_m: float
    y_m: float
    heading_rad: float
    speed_mps: float
    cov_xx: float
    cov_yy: float
    source: PoseSource

    @property
    def scalar_cov(self) -> float:
        return max(self.cov_xx, self.cov_yy)


@dataclass(frozen=True, slots=True)
class NoOdometrySignal:
    """Emitted when every localization source has gone stale."""

    stamp_ns: int


@dataclass(frozen=True, slots=True)
class RaceFlag:
    stamp_ns: int
    color: FlagColor
    origin: FlagOrigin


@dataclass(frozen=True, slots=True)
class JoystickMessage:
    """Base-station operator input; also the base-station sign-of-life."""

    stamp_ns: int
    counter: int
    bumper_left: bool
    bumper_right: bool
    # Manual override, active only when engaged.
    engaged: bool
    accelerator: float
    brake: float
    steering_deg: float


@dataclass(frozen=True, slots=True)
class Detection:
    """Single-opponent range report, signed along-track meters.

    Positive = opponent ahead of ego.  `true_positive` is harness metadata
    used by scoring only; no safety logic may read it.
    """

    stamp_ns: int
    separation_m: float
    true_positive: bool


@dataclass(frozen=True, slots=True)
class DesiredVelocity:
    stamp_ns: int
    speed_mps: float
    source: str


@dataclass(frozen=True, slots=True)
class LongitudinalCommand:
    stamp_ns: int
    accelerator: float  # [0, 1]
    brake: float  # [0, 1]
    gear: int
    # Velocity target after latch/override arbitration; observability only.
    desired_mps: float


@dataclass(frozen=True, slots=True)
class SteeringCommand:
    stamp_ns: int
    angle_deg: float


@dataclass(frozen=True, slots=True)
class BrakeCommand:
    """Direct brake issued by the node-health monitor, bypassing control."""

    stamp_ns: int
    brake: float


@dataclass(frozen=True, slots=True)
class ActuationState:
    """Merged command set forwarded to the drive-by-wire layer."""

    stamp_ns: int
    accelerator: float
    brake: float
    gear: int
    steering_deg: float


@dataclass(frozen=True, slots=True)
class EngineKill:
    stamp_ns: int
    reason: str


@dataclass(frozen=True, slots=True)
class StopRequest:
    stamp_ns: int
    reason: StopReason
    detail: str


@dataclass(frozen=True, slots=True)
class StopFlag:
    """Graceful-stop flag; republished every tick while the stop holds."""

    stamp_ns: int
    engaged: bool
    reason: StopReason
    detail: str


@dataclass(frozen=True, slots=True)
class Heartbeat:
    stamp_ns: int
    counter: int


@dataclass(frozen=True, slots=True)
class OperatorNotification:
    stamp_ns: int
    message: str


@dataclass(frozen=True, slots=True)
class PathRequest:
    stamp_ns: int
    path: str
    reason: str


@dataclass(frozen=True, slots=True)
class PathStatus:
    stamp_ns: int
    active_path: str
    lateral_error_m: float


@dataclass(frozen=True, slots=True)
class TelemetrySnapshot:
    stamp_ns: int
    engine_temp_c: float
    localization_scalar_cov: float
    current_speed_mps: float
    desired_speed_mps: float
    lateral_error_m: float
    flag: str
    x_m: float
    y_m: float
    last_stop_reason: str


@dataclass(frozen=True, slots=True)
class TruthRecord:
    """Ground-truth snapshot published for scoring and plots only."""

    stamp_ns: int
    ego_x_m: float
    ego_y_m: float
    ego_heading_rad: float
    ego_speed_mps: float
    separation_m: float | None
    lateral_error_m: float
    engine_on: bool

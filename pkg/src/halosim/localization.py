"""Localization pipeline: geodetic projection, per-unit cartesian pose
conversion, and a 4-state EKF fusing GNSS, IMU and wheel-speed data.

State vector: [x north (m), y east (m), heading (rad), speed (m/s)].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import topics
from .bus import Node
from .messages import GnssFix, ImuSample, LocalPose, PoseSource, WheelSpeedReport

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

# Flat-tangent projection validity; generous for any race track.
MAX_OFFSET_DEG = 0.5


class OutOfProjectionRange(Exception):
    pass


class CovarianceNotPSD(Exception):
    pass


def meridian_radius_m(lat_rad: float) -> float:
    s2 = math.sin(lat_rad) ** 2
    return WGS84_A * (1.0 - WGS84_E2) / (1.0 - WGS84_E2 * s2) ** 1.5


def normal_radius_m(lat_rad: float) -> float:
    s2 = math.sin(lat_rad) ** 2
    return WGS84_A / math.sqrt(1.0 - WGS84_E2 * s2)


def to_local_xy(
    lat_deg: float, lon_deg: float, origin_lat_deg: float, origin_lon_deg: float
) -> tuple[float, float]:
    """Project a geodetic fix to local meters (x north, y east)."""
    dlat = lat_deg - origin_lat_deg
    dlon = lon_deg - origin_lon_deg
    if abs(dlat) > MAX_OFFSET_DEG or abs(dlon) > MAX_OFFSET_DEG:
        raise OutOfProjectionRange(f"fix {dlat=:.4f} {dlon=:.4f} deg from origin")
    lat0 = math.radians(origin_lat_deg)
    x = math.radians(dlat) * meridian_radius_m(lat0)
    y = math.radians(dlon) * normal_radius_m(lat0) * math.cos(lat0)
    return x, y


def from_local_xy(
    x_m: float, y_m: float, origin_lat_deg: float, origin_lon_deg: float
) -> tuple[float, float]:
    """Exact algebraic inverse of to_local_xy."""
    lat0 = math.radians(origin_lat_deg)
    lat = origin_lat_deg + math.degrees(x_m / meridian_radius_m(lat0))
    lon = origin_lon_deg + math.degrees(
        y_m / (normal_radius_m(lat0) * math.cos(lat0))
    )
    return lat, lon


def heading_hysteresis(
    prev_heading_rad: float,
    prev_xy: tuple[float, float],
    cur_xy: tuple[float, float],
    min_step_m: float = 0.05,
) -> float:
    """Heading from consecutive positions; holds the previous value for
    sub-threshold moves so a stationary vehicle's heading does not jitter."""
    dx = cur_xy[0] - prev_xy[0]
    dy = cur_xy[1] - prev_xy[1]
    if math.hypot(dx, dy) < min_step_m:
        return prev_heading_rad
    return math.atan2(dy, dx)


# -- EKF ---------------------------------------------------------------------


@dataclass
class EkfConfig:
    # Process noise per second of prediction, state order [x, y, heading, v].
    q_diag: tuple[float, float, float, float] = (0.05, 0.05, 0.005, 0.5)
    initial_var: tuple[float, float, float, float] = (1.0, 1.0, 0.1, 1.0)
    wheel_speed_var: float = 0.01


class EkfCore:
    """Extended Kalman filter over [x, y, heading, speed].

    Updates use the Joseph form and the covariance is re-symmetrized after
    every step; if positive definiteness is ever lost beyond repair the
    filter raises CovarianceNotPSD rather than limp on.
    """

    def __init__(self, config: EkfConfig | None = None) -> None:
        self.config = config or EkfConfig()
        self.x = np.zeros(4)
        self.P = np.diag(self.config.initial_var).astype(float)
        self.Q = np.diag(self.config.q_diag).astype(float)

    @property
    def scalar_cov(self) -> float:
        """Worst position-axis variance; the health signal downstream."""
        return float(max(self.P[0, 0], self.P[1, 1]))

    def initialize(self, x: float, y: float, heading: float, speed: float) -> None:
        self.x = np.array([x, y, heading, speed], dtype=float)
        self.P = np.diag(self.config.initial_var).astype(float)

    def predict(self, dt_s: float, accel_mps2: float, yaw_rate_rps: float) -> None:
        px, py, heading, speed = self.x
        cos_h, sin_h = math.cos(heading), math.sin(heading)
        self.x = np.array(
            [
                px + speed * cos_h * dt_s,
                py + speed * sin_h * dt_s,
                self._wrap(heading + yaw_rate_rps * dt_s),
                max(0.0, speed + accel_mps2 * dt_s),
            ]
        )
        F = np.array(
            [
                [1.0, 0.0, -speed * sin_h * dt_s, cos_h * dt_s],
                [0.0, 1.0, speed * cos_h * dt_s, sin_h * dt_s],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        self.P = F @ self.P @ F.T + self.Q * dt_s
        self._maintain_spd()

    def update_position(self, zx: float, zy: float, var_x: float, var_y: float) -> None:
        H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
        self._update(np.array([zx, zy]), H, np.diag([var_x, var_y]))

    def update_speed(self, z: float, var: float) -> None:
        H = np.array([[0.0, 0.0, 0.0, 1.0]])
        self._update(np.array([z]), H, np.array([[var]]))

    def inflate(self, factor: float) -> None:
        """Multiplicative covariance growth; the data-degradation hook."""
        self.P = self.P * factor
        self._maintain_spd()

    def floor_position_cov(self, floor: float) -> None:
        """Raise the worst position variance to `floor` if it sits below.

        Scales only the position block (congruence with diag(d, d, 1, 1)),
        so repeated application against measurement updates stays stable:
        heading/speed variances have no correcting measurement and would
        compound without bound under whole-matrix scaling.
        """
        current = self.scalar_cov
        if current <= 0.0 or current >= floor:
            return
        d = math.sqrt(floor / current)
        scale = np.diag([d, d, 1.0, 1.0])
        self.P = scale @ self.P @ scale
        self._maintain_spd()

    def _update(self, z: np.ndarray, H: np.ndarray, R: np.ndarray) -> None:
        innovation = z - H @ self.x
        S = H @ self.P @ H.T + R
        K = self.P @ H.T @ np.linalg.inv(S)
        self.x = self.x + K @ innovation
        self.x[2] = self._wrap(self.x[2])
        I_KH = np.eye(4) - K @ H
        self.P = I_KH @ self.P @ I_KH.T + K @ R @ K.T
        self._maintain_spd()

    def _maintain_spd(self) -> None:
        self.P = (self.P + self.P.T) / 2.0
        try:
            np.linalg.cholesky(self.P)
            return
        except np.linalg.LinAlgError:
            pass
        # Eigenvalue clip, then one retry.
        vals, vecs = np.linalg.eigh(self.P)
        self.P = (vecs * np.maximum(vals, 1e-12)) @ vecs.T
        self.P = (self.P + self.P.T) / 2.0
        try:
            np.linalg.cholesky(self.P)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise CovarianceNotPSD(str(self.P)) from exc

    @staticmethod
    def _wrap(angle: float) -> float:
        return (angle + math.pi) % (2.0 * math.pi) - math.pi


def ekf_inflate(core: EkfCore, factor: float) -> None:
    core.inflate(factor)


# -- nodes --------------------------------------------------------------------


class MapBaselinkNode(Node):
    """Converts one GNSS unit's geodetic fixes to local cartesian poses."""

    rate_hz = 20.0

    def __init__(self, unit: str, origin_lat_deg: float, origin_lon_deg: float) -> None:
        self.unit = unit
        self.name = f"map_baselink_{unit}"
        source_topic = topics.GNSS_TOP if unit == "top" else topics.GNSS_BOTTOM
        self.subscribes = (source_topic,)
        self._source_topic = source_topic
        self._out_topic = (
            topics.CARTESIAN_TOP if unit == "top" else topics.CARTESIAN_BOTTOM
        )
        self.publishes = (self._out_topic,)
        self._origin = (origin_lat_deg, origin_lon_deg)
        self._prev_xy: tuple[float, float] | None = None
        self._prev_stamp_ns: int | None = None
        self._heading = 0.0
        self._pose_source = (
            PoseSource.GNSS_TOP if unit == "top" else PoseSource.GNSS_BOTTOM
        )

    def tick(self, now_ns: int) -> None:
        for message in self.take(self._source_topic):
            fix: GnssFix = message.payload
            xy = to_local_xy(fix.lat_deg, fix.lon_deg, *self._origin)
            speed = 0.0
            if self._prev_xy is not None and fix.stamp_ns > self._prev_stamp_ns:
                dt = (fix.stamp_ns - self._prev_stamp_ns) / 1e9
                dist = math.hypot(xy[0] - self._prev_xy[0], xy[1] - self._prev_xy[1])
                speed = dist / dt
                self._heading = heading_hysteresis(self._heading, self._prev_xy, xy)
            self.publish(
                self._out_topic,
                LocalPose(
                    stamp_ns=fix.stamp_ns,
                    x_m=xy[0],
                    y_m=xy[1],
                    heading_rad=self._heading,
                    speed_mps=speed,
                    cov_xx=fix.lat_stddev_m**2,
                    cov_yy=fix.lon_stddev_m**2,
                    source=self._pose_source,
                ),
            )
            self._prev_xy = xy
            self._prev_stamp_ns = fix.stamp_ns


@dataclass
class _InflateFault:
    start_ns: int
    ramp_ns: int
    factor: float
    baseline_cov: float | None = None
    target: float | None = None  # absolute scalar_cov; overrides factor


class EkfNode(Node):
    """100 Hz fusion node: IMU-driven predict, GNSS/wheel-speed updates."""

    name = "ekf"
    rate_hz = 100.0
    subscribes = (
        topics.CARTESIAN_TOP,
        topics.CARTESIAN_BOTTOM,
        topics.IMU,
        topics.WHEEL_SPEED,
    )
    publishes = (topics.EKF_ODOM,)

    def __init__(self, config: EkfConfig | None = None) -> None:
        self.core = EkfCore(config)
        self._initialized = False
        self._last_predict_ns: int | None = None
        self._latest_imu: ImuSample | None = None
        self._inflate: _InflateFault | None = None

    def set_inflate_fault(
        self,
        start_ns: int,
        ramp_ns: int,
        factor: float | None,
        target: float | None = None,
    ) -> None:
        self._inflate = _InflateFault(
            start_ns=start_ns, ramp_ns=ramp_ns, factor=factor or 1.0, target=target
        )

    def tick(self, now_ns: int) -> None:
        for message in self.take(topics.IMU):
            self._latest_imu = message.payload
        poses = [m.payload for m in self.take(topics.CARTESIAN_TOP)]
        poses += [m.payload for m in self.take(topics.CARTESIAN_BOTTOM)]
        poses.sort(key=lambda p: p.stamp_ns)
        wheel = self.take_last(topics.WHEEL_SPEED)

        if not self._initialized:
            if poses:
                first = poses[-1]
                speed = wheel.payload.speed_mps if wheel else first.speed_mps
                self.core.initialize(first.x_m, first.y_m, first.heading_rad, speed)
                self._initialized = True
                self._last_predict_ns = now_ns
            return

        dt = (now_ns - self._last_predict_ns) / 1e9
        imu = self._latest_imu
        accel = imu.accel_mps2 if imu else 0.0
        yaw_rate = imu.yaw_rate_rps if imu else 0.0
        if dt > 0:
            self.core.predict(dt, accel, yaw_rate)
        self._last_predict_ns = now_ns

        for pose in poses:
            self.core.update_position(pose.x_m, pose.y_m, pose.cov_xx, pose.cov_yy)
        if wheel is not None:
            self.core.update_speed(
                wheel.payload.speed_mps, self.core.config.wheel_speed_var
            )
        self._apply_inflate(now_ns)

        x = self.core.x
        self.publish(
            topics.EKF_ODOM,
            LocalPose(
                stamp_ns=now_ns,
                x_m=float(x[0]),
                y_m=float(x[1]),
                heading_rad=float(x[2]),
                speed_mps=float(x[3]),
                cov_xx=float(self.core.P[0, 0]),
                cov_yy=float(self.core.P[1, 1]),
                source=PoseSource.EKF,
            ),
        )

    def _apply_inflate(self, now_ns: int) -> None:
        fault = self._inflate
        if fault is None or now_ns < fault.start_ns:
            return
        if fault.baseline_cov is None:
            fault.baseline_cov = self.core.scalar_cov
            if fault.target is not None:
                fault.factor = max(1.0, fault.target / fault.baseline_cov)
        if fault.ramp_ns <= 0:
            progress = 1.0
        else:
            progress = min(1.0, (now_ns - fault.start_ns) / fault.ramp_ns)
        floor = fault.baseline_cov * fault.factor**progress
        self.core.floor_position_cov(floor)

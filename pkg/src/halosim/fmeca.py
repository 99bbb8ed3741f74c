"""Failure-mode table and qualitative criticality assessment.

Criticality is probability x severity looked up in a fixed matrix; the
table below enumerates the failure modes this simulator can inject, the
layer that detects each one, and the mitigation it triggers.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass


class Probability(enum.Enum):
    FREQUENT = "frequent"
    PROBABLE = "probable"
    REMOTE = "remote"
    UNLIKELY = "unlikely"


class Severity(enum.Enum):
    NEGLIGIBLE = "negligible"
    MARGINAL = "marginal"
    CRITICAL = "critical"


class Criticality(enum.Enum):
    INSIGNIFICANT = "insignificant"
    MINOR = "minor"
    MAJOR = "major"
    HIGH = "high"


_MATRIX: dict[Probability, dict[Severity, Criticality]] = {
    Probability.FREQUENT: {
        Severity.NEGLIGIBLE: Criticality.MINOR,
        Severity.MARGINAL: Criticality.MAJOR,
        Severity.CRITICAL: Criticality.HIGH,
    },
    Probability.PROBABLE: {
        Severity.NEGLIGIBLE: Criticality.MINOR,
        Severity.MARGINAL: Criticality.MAJOR,
        Severity.CRITICAL: Criticality.HIGH,
    },
    Probability.REMOTE: {
        Severity.NEGLIGIBLE: Criticality.INSIGNIFICANT,
        Severity.MARGINAL: Criticality.MINOR,
        Severity.CRITICAL: Criticality.MAJOR,
    },
    Probability.UNLIKELY: {
        Severity.NEGLIGIBLE: Criticality.INSIGNIFICANT,
        Severity.MARGINAL: Criticality.INSIGNIFICANT,
        Severity.CRITICAL: Criticality.MINOR,
    },
}


def fmeca_criticality(probability: Probability, severity: Severity) -> Criticality:
    return _MATRIX[probability][severity]


@dataclass(frozen=True)
class FailureMode:
    component: str
    mode: str
    effect: str
    detector: str  # which safety layer notices
    mitigation: str
    probability: Probability
    severity: Severity

    @property
    def criticality(self) -> Criticality:
        return fmeca_criticality(self.probability, self.severity)


FAILURE_MODES: tuple[FailureMode, ...] = (
    FailureMode(
        component="localization filter",
        mode="covariance divergence",
        effect="pose estimate drifts while looking plausible",
        detector="topic multiplexer (data health)",
        mitigation="fall back to raw GNSS pose until 20 good messages",
        probability=Probability.PROBABLE,
        severity=Severity.CRITICAL,
    ),
    FailureMode(
        component="gnss unit",
        mode="silence (antenna or receiver loss)",
        effect="no absolute position updates",
        detector="graceful stop (data health)",
        mitigation="controlled stop after 500 ms of dual silence",
        probability=Probability.REMOTE,
        severity=Severity.CRITICAL,
    ),
    FailureMode(
        component="gnss unit",
        mode="degraded accuracy",
        effect="position stddev above 0.35 m on every fresh unit",
        detector="graceful stop (data health)",
        mitigation="controlled stop",
        probability=Probability.PROBABLE,
        severity=Severity.MARGINAL,
    ),
    FailureMode(
        component="topic multiplexer",
        mode="process crash",
        effect="no best-odometry stream, downstream control starves",
        detector="node health monitor (heartbeat)",
        mitigation="monitor bridges the better GNSS pose itself",
        probability=Probability.REMOTE,
        severity=Severity.CRITICAL,
    ),
    FailureMode(
        component="longitudinal control",
        mode="process crash",
        effect="stale throttle/brake commands",
        detector="node health monitor (heartbeat)",
        mitigation="direct brake through the drive-by-wire interface",
        probability=Probability.REMOTE,
        severity=Severity.CRITICAL,
    ),
    FailureMode(
        component="drive-by-wire interface",
        mode="process crash",
        effect="no actuation path at all",
        detector="node health monitor (heartbeat)",
        mitigation="engine shutdown",
        probability=Probability.UNLIKELY,
        severity=Severity.CRITICAL,
    ),
    FailureMode(
        component="lidar detector",
        mode="false-positive burst",
        effect="phantom opponent readings during an overtake",
        detector="behavioral monitor (n-of-k vote)",
        mitigation="merge only on 8 of 10 readings past the gap bound",
        probability=Probability.FREQUENT,
        severity=Severity.MARGINAL,
    ),
    FailureMode(
        component="lidar detector",
        mode="process crash",
        effect="no opponent awareness",
        detector="node health monitor (heartbeat)",
        mitigation="notify operator",
        probability=Probability.REMOTE,
        severity=Severity.MARGINAL,
    ),
    FailureMode(
        component="race-control flag feed",
        mode="radio dead zone",
        effect="stale flag state",
        detector="graceful stop (data health)",
        mitigation="controlled stop after 25 s",
        probability=Probability.FREQUENT,
        severity=Severity.NEGLIGIBLE,
    ),
    FailureMode(
        component="base-station joystick",
        mode="radio dead zone",
        effect="no remote kill available",
        detector="graceful stop (data health)",
        mitigation="controlled stop after 10 s",
        probability=Probability.PROBABLE,
        severity=Severity.NEGLIGIBLE,
    ),
    FailureMode(
        component="vehicle diagnostics",
        mode="reported platform fault",
        effect="vehicle self-reports a hardware problem",
        detector="graceful stop (data health)",
        mitigation="controlled stop, not recoverable",
        probability=Probability.REMOTE,
        severity=Severity.MARGINAL,
    ),
    FailureMode(
        component="node health monitor",
        mode="process crash",
        effect="heartbeat supervision lost",
        detector="graceful stop (monitor pulse)",
        mitigation="controlled stop after 500 ms",
        probability=Probability.UNLIKELY,
        severity=Severity.CRITICAL,
    ),
)


def render_table(modes: tuple[FailureMode, ...] = FAILURE_MODES) -> str:
    """Plain-text table, one row per failure mode."""
    headers = (
        "component",
        "mode",
        "detector",
        "mitigation",
        "probability",
        "severity",
        "criticality",
    )
    rows = [
        (
            m.component,
            m.mode,
            m.detector,
            m.mitigation,
            m.probability.value,
            m.severity.value,
            m.criticality.value,
        )
        for m in modes
    ]
    widths = [
        max(len(headers[i]), max(len(r[i]) for r in rows)) for i in range(len(headers))
    ]
    def fmt(row):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
    lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)

"""Run summary computed from the trace alone.

Everything here is a pure function of recorded events, so a saved trace
replays to the identical report; nothing reads the wall clock.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import topics
from .trace import FAULT, HALO_ACTION, PUBLISH, TraceLog


@dataclass
class MetricsReport:
    duration_s: float
    topic_rates_hz: dict[str, float]
    # (t_s, source) transitions of the best-odometry stream.
    odometry_timeline: list[tuple[float, str]]
    # (t_s, reason) for each distinct stop engagement.
    stop_events: list[tuple[float, str]]
    # (t_s, node, action) for every safety action.
    actions: list[tuple[float, str, str]]
    # fault class -> {fault label -> seconds from injection to the first
    # safety action at or after it}.
    time_to_mitigation_s: dict[str, dict[str, float | None]]
    min_true_separation_m: float | None
    separation_at_merge_m: float | None
    max_abs_lateral_error_m: float | None
    final_speed_mps: float | None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "duration_s": self.duration_s,
            "topic_rates_hz": self.topic_rates_hz,
            "odometry_timeline": self.odometry_timeline,
            "stop_events": self.stop_events,
            "actions": self.actions,
            "time_to_mitigation_s": self.time_to_mitigation_s,
            "min_true_separation_m": self.min_true_separation_m,
            "separation_at_merge_m": self.separation_at_merge_m,
            "max_abs_lateral_error_m": self.max_abs_lateral_error_m,
            "final_speed_mps": self.final_speed_mps,
            **({"extras": self.extras} if self.extras else {}),
        }


def _round(value: float | None, digits: int = 4) -> float | None:
    return None if value is None else round(value, digits)


def compute_metrics(trace: TraceLog, duration_s: float) -> MetricsReport:
    publishes = [e for e in trace.events if e.kind == PUBLISH]
    actions = [e for e in trace.events if e.kind == HALO_ACTION]
    faults = [e for e in trace.events if e.kind == FAULT]

    counts: dict[str, int] = {}
    for e in publishes:
        counts[e.topic] = counts.get(e.topic, 0) + 1
    topic_rates = {t: round(c / duration_s, 3) for t, c in sorted(counts.items())}

    timeline: list[tuple[float, str]] = []
    for e in publishes:
        if e.topic != topics.BEST_ODOM:
            continue
        source = e.payload_summary.get("source", "?")
        if not timeline or timeline[-1][1] != source:
            timeline.append((round(e.t_ns / 1e9, 4), source))

    stop_events = [
        (round(e.t_ns / 1e9, 4), e.payload_summary.get("reason", "?"))
        for e in actions
        if e.payload_summary.get("action") == "graceful_stop"
    ]
    action_rows = [
        (round(e.t_ns / 1e9, 4), e.node, e.payload_summary.get("action", "?"))
        for e in actions
    ]

    mitigation: dict[str, dict[str, float | None]] = {}
    for f in faults:
        label = f.payload_summary.get("fault", "?")
        fault_class = f.payload_summary.get("fault_class", "unclassified")
        follow = next((a for a in actions if a.t_ns >= f.t_ns), None)
        key = f"{label}@{f.t_ns / 1e9:.2f}s"
        mitigation.setdefault(fault_class, {})[key] = (
            round((follow.t_ns - f.t_ns) / 1e9, 4) if follow is not None else None
        )

    min_sep: float | None = None
    max_lat: float | None = None
    final_speed: float | None = None
    truth_rows: list[tuple[int, dict]] = []
    for e in publishes:
        if e.topic != topics.TRUTH:
            continue
        truth_rows.append((e.t_ns, e.payload_summary))
        sep = e.payload_summary.get("separation_m")
        if sep is not None:
            min_sep = sep if min_sep is None else min(min_sep, sep)
        lat = abs(e.payload_summary.get("lateral_error_m", 0.0))
        max_lat = lat if max_lat is None else max(max_lat, lat)
        final_speed = e.payload_summary.get("ego_speed_mps")

    merge = next(
        (a for a in actions if a.payload_summary.get("action") == "close_door_merge"),
        None,
    )
    sep_at_merge: float | None = None
    if merge is not None and truth_rows:
        nearest = min(truth_rows, key=lambda row: abs(row[0] - merge.t_ns))
        sep_at_merge = nearest[1].get("separation_m")

    return MetricsReport(
        duration_s=duration_s,
        topic_rates_hz=topic_rates,
        odometry_timeline=timeline,
        stop_events=stop_events,
        actions=action_rows,
        time_to_mitigation_s=mitigation,
        min_true_separation_m=_round(min_sep),
        separation_at_merge_m=_round(sep_at_merge),
        max_abs_lateral_error_m=_round(max_lat),
        final_speed_mps=_round(final_speed),
    )

"""Structured trace log.

One record per simulation event (tick, publish, fault, safety action),
line-delimited JSON with a fixed field order so traces from two runs can be
diffed byte-for-byte.  Trace bytes never include wall-clock data.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, fields, is_dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator

# Record kinds.
TICK = "tick"
PUBLISH = "publish"
FAULT = "fault"
HALO_ACTION = "halo_action"

_FIELD_ORDER = ("t_ns", "kind", "node", "topic", "seq", "payload_summary")


def summarize_payload(payload: Any) -> dict[str, Any] | None:
    """Flatten a payload dataclass into JSON-safe key/value pairs."""
    if payload is None:
        return None
    if isinstance(payload, dict):
        return {k: _jsonable(v) for k, v in payload.items()}
    if is_dataclass(payload):
        return {f.name: _jsonable(getattr(payload, f.name)) for f in fields(payload)}
    return {"value": _jsonable(payload)}


def _jsonable(value: Any) -> Any:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (bool, int, float, str)) or value is None:
        return value
    return repr(value)


@dataclass(slots=True)
class TraceEvent:
    t_ns: int
    kind: str
    node: str
    topic: str | None
    seq: int | None
    payload_summary: dict[str, Any] | None

    def to_line(self) -> str:
        record = {name: getattr(self, name) for name in _FIELD_ORDER}
        return json.dumps(record, separators=(",", ":"))


class TraceLog:
    """Append-only in-memory event log with line-delimited serialization."""

    def __init__(self) -> None:
        self.events: list[TraceEvent] = []

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def record(
        self,
        t_ns: int,
        kind: str,
        node: str,
        topic: str | None = None,
        seq: int | None = None,
        payload: Any = None,
    ) -> None:
        self.events.append(
            TraceEvent(t_ns, kind, node, topic, seq, summarize_payload(payload))
        )

    def serialize(self) -> str:
        return "".join(event.to_line() + "\n" for event in self.events)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.serialize())

    @classmethod
    def load(cls, path: str | Path) -> "TraceLog":
        log = cls()
        with open(path) as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                raw = json.loads(line)
                log.events.append(TraceEvent(**{k: raw[k] for k in _FIELD_ORDER}))
        return log

    # Query helpers used by metrics, predicates and tests.

    def publishes(self, topic: str | None = None) -> list[TraceEvent]:
        return [
            e
            for e in self.events
            if e.kind == PUBLISH and (topic is None or e.topic == topic)
        ]

    def actions(self, action: str | None = None) -> list[TraceEvent]:
        out = []
        for e in self.events:
            if e.kind != HALO_ACTION:
                continue
            if action is None or (e.payload_summary or {}).get("action") == action:
                out.append(e)
        return out

    def faults(self) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == FAULT]


def iter_matching(
    events: Iterable[TraceEvent], **conditions: Any
) -> Iterator[TraceEvent]:
    """Yield events whose attributes equal all given conditions."""
    for event in events:
        if all(getattr(event, key) == value for key, value in conditions.items()):
            yield event

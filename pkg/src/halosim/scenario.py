"""Scenario files: everything one run needs, loaded from YAML.

A scenario pins the track, the ego and opponent setups, sensor noise, the
flag and joystick scripts, the safety-layer tuning, the fault injections,
and the machine-checkable predicates evaluated against the trace.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .messages import FlagColor


class ConfigError(Exception):
    """Invalid scenario content; the message carries the offending path."""


# Which protection layer each fault kind exercises.
FAULT_CLASSES: dict[str, str] = {
    "node_crash": "node_health",
    "node_stall": "node_health",
    "topic_drop": "data_health",
    "message_delay": "data_health",
    "value_corrupt": "data_health",
    "cov_inflate": "data_health",
    "radio_dead_arc": "data_health",
    "diagnostics_error": "data_health",
    "detection_burst": "behavioral_safety",
}

_REQUIRED_PARAMS: dict[str, tuple[str, ...]] = {
    "node_crash": ("node",),
    "node_stall": ("node", "duration_s"),
    "topic_drop": ("topic", "duration_s"),
    "message_delay": ("topic", "delay_s"),
    "value_corrupt": ("topic", "field", "value"),
    "cov_inflate": ("ramp_s",),
    "detection_burst": ("duration_s", "fp_rate"),
    "radio_dead_arc": ("link", "start_s", "end_s"),
    "diagnostics_error": ("code",),
}

_SPEED_TABLE_COLORS = ("green", "waving_green", "yellow", "red")

# Purple is absent on purpose: it shuts the engine down instead of setting
# a speed.  Values are configuration defaults, overridable per scenario.
DEFAULT_SPEED_TABLE: dict[str, object] = {
    "green": {"default": 40.0, "pit_lane": 10.0, "pit_box_zone": 10.0},
    "waving_green": {"default": 40.0, "pit_lane": 10.0, "pit_box_zone": 10.0},
    "yellow": 15.0,
    "red": 0.0,
}


@dataclass(frozen=True)
class FaultSpec:
    kind: str
    at_s: float
    params: dict = field(default_factory=dict)

    @property
    def fault_class(self) -> str:
        return FAULT_CLASSES[self.kind]


@dataclass
class EgoSetup:
    path: str = "raceline"
    start_arclength_m: float = 0.0
    initial_speed_mps: float = 0.0
    desired_speed_mps: float = 31.2928  # 70 mph


@dataclass
class OpponentSetup:
    enabled: bool = False
    path: str = "raceline"
    start_arclength_m: float = 0.0
    speed_mps: float = 26.8224  # 60 mph


@dataclass
class Scenario:
    name: str
    duration_s: float
    seed: int
    track_file: str | None = None
    ego: EgoSetup = field(default_factory=EgoSetup)
    opponent: OpponentSetup = field(default_factory=OpponentSetup)
    sensors: dict = field(default_factory=dict)
    flag_schedule: list[tuple[float, FlagColor]] = field(
        default_factory=lambda: [(0.0, FlagColor.GREEN)]
    )
    spoofed_schedule: list[tuple[float, FlagColor]] = field(default_factory=list)
    joystick: dict = field(default_factory=dict)
    speed_table: dict = field(default_factory=lambda: dict(DEFAULT_SPEED_TABLE))
    perception: dict = field(default_factory=dict)
    door: dict = field(default_factory=dict)
    mux: dict = field(default_factory=dict)
    graceful_stop: dict = field(default_factory=dict)
    node_health: dict = field(default_factory=dict)
    disable_halo_node: str | None = None
    faults: list[FaultSpec] = field(default_factory=list)
    predicates: list[dict] = field(default_factory=list)


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return mapping[key]


def _parse_color(raw: str, where: str) -> FlagColor:
    try:
        return FlagColor(raw)
    except ValueError:
        valid = ", ".join(c.value for c in FlagColor)
        raise ConfigError(f"{where}: unknown flag color {raw!r} (valid: {valid})")


def _parse_schedule(raw, where: str) -> list[tuple[float, FlagColor]]:
    if raw is None:
        return []
    schedule = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise ConfigError(f"{where}[{i}]: expected [t_s, color]")
        t_s, color = entry
        schedule.append((float(t_s), _parse_color(str(color), f"{where}[{i}]")))
    return schedule


def _parse_fault(raw: dict, where: str) -> FaultSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    kind = str(_require(raw, "kind", where))
    if kind not in FAULT_CLASSES:
        valid = ", ".join(sorted(FAULT_CLASSES))
        raise ConfigError(f"{where}.kind: unknown fault kind {kind!r} (valid: {valid})")
    at_s = float(_require(raw, "at_s", where))
    params = {k: v for k, v in raw.items() if k not in ("kind", "at_s")}
    for key in _REQUIRED_PARAMS[kind]:
        if key not in params:
            raise ConfigError(f"{where}: fault kind {kind!r} requires {key!r}")
    if kind == "cov_inflate" and "factor" not in params and "target" not in params:
        raise ConfigError(f"{where}: cov_inflate requires 'factor' or 'target'")
    return FaultSpec(kind=kind, at_s=at_s, params=params)


def _validate_speed_table(table: dict, where: str) -> dict:
    for color in _SPEED_TABLE_COLORS:
        if color not in table:
            raise ConfigError(f"{where}: missing entry for flag color {color!r}")
        entry = table[color]
        if isinstance(entry, dict):
            if "default" not in entry:
                raise ConfigError(f"{where}.{color}: region table needs 'default'")
        else:
            float(entry)
    return table


def scenario_from_dict(data: dict, source: str = "<dict>") -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: scenario root must be a mapping")
    name = str(_require(data, "name", source))
    duration_s = float(_require(data, "duration_s", source))
    if duration_s <= 0:
        raise ConfigError(f"{source}.duration_s: must be positive")
    seed = int(_require(data, "seed", source))

    ego = EgoSetup(**data.get("ego", {}))
    opponent = OpponentSetup(**data.get("opponent", {}))

    track = data.get("track", "default")
    if track == "default":
        track_file = None
    elif isinstance(track, dict) and "file" in track:
        track_file = str(track["file"])
    else:
        raise ConfigError(f"{source}.track: expected 'default' or {{file: path}}")

    speed_table = _validate_speed_table(
        data.get("speed_table", dict(DEFAULT_SPEED_TABLE)), f"{source}.speed_table"
    )
    faults = [
        _parse_fault(raw, f"{source}.faults[{i}]")
        for i, raw in enumerate(data.get("faults", []))
    ]
    for i, fault in enumerate(faults):
        if not 0.0 <= fault.at_s <= duration_s:
            raise ConfigError(
                f"{source}.faults[{i}].at_s: {fault.at_s} outside run duration"
            )
    predicates = data.get("predicates", [])
    if not isinstance(predicates, list):
        raise ConfigError(f"{source}.predicates: expected a list")

    disable = data.get("disable_halo_node")
    return Scenario(
        name=name,
        duration_s=duration_s,
        seed=seed,
        track_file=track_file,
        ego=ego,
        opponent=opponent,
        sensors=data.get("sensors", {}),
        flag_schedule=_parse_schedule(
            data.get("flags", [[0.0, "green"]]), f"{source}.flags"
        ),
        spoofed_schedule=_parse_schedule(
            data.get("spoofed_flags"), f"{source}.spoofed_flags"
        ),
        joystick=data.get("joystick", {}),
        speed_table=speed_table,
        perception=data.get("perception", {}),
        door=data.get("door", {}),
        mux=data.get("mux", {}),
        graceful_stop=data.get("graceful_stop", {}),
        node_health=data.get("node_health", {}),
        disable_halo_node=str(disable) if disable is not None else None,
        faults=faults,
        predicates=predicates,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    with path.open() as fh:
        data = yaml.safe_load(fh)
    return scenario_from_dict(data, source=str(path))

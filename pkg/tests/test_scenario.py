"""Scenario parsing and validation, plus the bundled scenario files."""
from __future__ import annotations

import pytest

from halosim.messages import FlagColor
from halosim.scenario import (
    DEFAULT_SPEED_TABLE,
    ConfigError,
    FaultSpec,
    Scenario,
    load_scenario,
    scenario_from_dict,
)
from halosim.scenarios import bundled_names, bundled_path


def minimal(**overrides) -> dict:
    data = {"name": "tiny", "duration_s": 2.0, "seed": 3}
    data.update(overrides)
    return data


class TestRequiredFields:
    @pytest.mark.parametrize("missing", ["name", "duration_s", "seed"])
    def test_missing_top_level_key(self, missing):
        data = minimal()
        del data[missing]
        with pytest.raises(ConfigError, match=f"missing required key {missing!r}"):
            scenario_from_dict(data)

    def test_root_must_be_mapping(self):
        with pytest.raises(ConfigError, match="root must be a mapping"):
            scenario_from_dict(["name", "tiny"])

    @pytest.mark.parametrize("duration", [0.0, -1.0])
    def test_duration_must_be_positive(self, duration):
        with pytest.raises(ConfigError, match="must be positive"):
            scenario_from_dict(minimal(duration_s=duration))


class TestDefaults:
    def test_minimal_scenario_defaults(self):
        sc = scenario_from_dict(minimal())
        assert sc.track_file is None
        assert sc.flag_schedule == [(0.0, FlagColor.GREEN)]
        assert sc.spoofed_schedule == []
        assert sc.speed_table == DEFAULT_SPEED_TABLE
        assert sc.ego.desired_speed_mps == pytest.approx(31.2928)  # 70 mph
        assert not sc.opponent.enabled
        assert sc.faults == []
        assert sc.predicates == []
        assert sc.disable_halo_node is None

    def test_speed_table_default_is_copied_not_shared(self):
        a = scenario_from_dict(minimal())
        b = scenario_from_dict(minimal())
        a.speed_table["yellow"] = 1.0
        assert b.speed_table["yellow"] == DEFAULT_SPEED_TABLE["yellow"]


class TestTrackField:
    def test_default_keyword(self):
        assert scenario_from_dict(minimal(track="default")).track_file is None

    def test_file_mapping(self):
        sc = scenario_from_dict(minimal(track={"file": "oval.json"}))
        assert sc.track_file == "oval.json"

    @pytest.mark.parametrize("bad", ["oval.json", {"path": "oval.json"}, 7])
    def test_other_shapes_rejected(self, bad):
        with pytest.raises(ConfigError, match="expected 'default' or"):
            scenario_from_dict(minimal(track=bad))


class TestFlagSchedules:
    def test_parsed_in_order_given(self):
        sc = scenario_from_dict(minimal(flags=[[0.0, "green"], [5.0, "yellow"]]))
        assert sc.flag_schedule == [
            (0.0, FlagColor.GREEN),
            (5.0, FlagColor.YELLOW),
        ]

    def test_unknown_color_lists_valid_ones(self):
        with pytest.raises(ConfigError, match="unknown flag color 'chartreuse'"):
            scenario_from_dict(minimal(flags=[[0.0, "chartreuse"]]))

    def test_malformed_entry_rejected(self):
        with pytest.raises(ConfigError, match=r"flags\[1\]: expected"):
            scenario_from_dict(minimal(flags=[[0.0, "green"], ["yellow"]]))

    def test_spoofed_schedule_optional_and_parsed(self):
        sc = scenario_from_dict(minimal(spoofed_flags=[[1.0, "red"]]))
        assert sc.spoofed_schedule == [(1.0, FlagColor.RED)]


class TestSpeedTable:
    def test_missing_color_rejected(self):
        table = {k: v for k, v in DEFAULT_SPEED_TABLE.items() if k != "yellow"}
        with pytest.raises(ConfigError, match="missing entry for flag color 'yellow'"):
            scenario_from_dict(minimal(speed_table=table))

    def test_region_table_needs_default(self):
        table = dict(DEFAULT_SPEED_TABLE, green={"pit_lane": 10.0})
        with pytest.raises(ConfigError, match="region table needs 'default'"):
            scenario_from_dict(minimal(speed_table=table))

    def test_scalar_entries_accepted(self):
        table = {"green": 30.0, "waving_green": 30.0, "yellow": 15.0, "red": 0.0}
        sc = scenario_from_dict(minimal(speed_table=table))
        assert sc.speed_table["green"] == 30.0


class TestFaultParsing:
    def test_unknown_kind_lists_valid_kinds(self):
        data = minimal(faults=[{"kind": "gremlin", "at_s": 1.0}])
        with pytest.raises(ConfigError, match="unknown fault kind 'gremlin'"):
            scenario_from_dict(data)

    @pytest.mark.parametrize(
        "kind, params, missing",
        [
            ("node_crash", {}, "node"),
            ("node_stall", {"node": "lidar"}, "duration_s"),
            ("topic_drop", {"duration_s": 1.0}, "topic"),
            ("message_delay", {"topic": "pose/gnss_top"}, "delay_s"),
            ("value_corrupt", {"topic": "pose/gnss_top", "field": "x"}, "value"),
            ("detection_burst", {"fp_rate": 1.0}, "duration_s"),
            ("radio_dead_arc", {"link": "mylaps", "start_s": 0.0}, "end_s"),
            ("diagnostics_error", {}, "code"),
        ],
    )
    def test_required_params_per_kind(self, kind, params, missing):
        fault = {"kind": kind, "at_s": 0.5, **params}
        with pytest.raises(ConfigError, match=f"requires {missing!r}"):
            scenario_from_dict(minimal(faults=[fault]))

    def test_cov_inflate_needs_factor_or_target(self):
        fault = {"kind": "cov_inflate", "at_s": 0.5, "ramp_s": 1.0}
        with pytest.raises(ConfigError, match="'factor' or 'target'"):
            scenario_from_dict(minimal(faults=[fault]))
        for extra in ({"factor": 3.0}, {"target": 0.5}):
            ok = scenario_from_dict(minimal(faults=[dict(fault, **extra)]))
            assert ok.faults[0].kind == "cov_inflate"

    @pytest.mark.parametrize("at_s", [-0.1, 2.5])
    def test_fault_time_must_lie_inside_run(self, at_s):
        fault = {"kind": "node_crash", "at_s": at_s, "node": "lidar"}
        with pytest.raises(ConfigError, match="outside run duration"):
            scenario_from_dict(minimal(faults=[fault]))

    def test_extra_keys_become_params(self):
        fault = {"kind": "node_stall", "at_s": 1.0, "node": "lidar", "duration_s": 0.3}
        sc = scenario_from_dict(minimal(faults=[fault]))
        assert sc.faults[0] == FaultSpec(
            kind="node_stall", at_s=1.0, params={"node": "lidar", "duration_s": 0.3}
        )

    def test_fault_entry_must_be_mapping(self):
        with pytest.raises(ConfigError, match="expected a mapping"):
            scenario_from_dict(minimal(faults=["node_crash"]))

    def test_fault_class_lookup(self):
        assert FaultSpec("node_crash", 1.0).fault_class == "node_health"
        assert FaultSpec("cov_inflate", 1.0).fault_class == "data_health"
        assert FaultSpec("detection_burst", 1.0).fault_class == "behavioral_safety"


class TestPredicatesField:
    def test_must_be_list(self):
        with pytest.raises(ConfigError, match="expected a list"):
            scenario_from_dict(minimal(predicates={"eventually": {}}))

    def test_passed_through_unvalidated(self):
        # Structural validation happens at check time, not load time.
        sc = scenario_from_dict(minimal(predicates=[{"eventually": {"kind": "tick"}}]))
        assert sc.predicates == [{"eventually": {"kind": "tick"}}]


class TestBundledScenarios:
    def test_names(self):
        assert bundled_names() == ["behavioral", "data_health", "node_health"]

    def test_unknown_name_raises_with_choices(self):
        with pytest.raises(FileNotFoundError, match="behavioral"):
            bundled_path("no_such_scenario")

    @pytest.mark.parametrize("name", ["behavioral", "data_health", "node_health"])
    def test_all_bundled_files_load(self, name):
        sc = load_scenario(bundled_path(name))
        assert isinstance(sc, Scenario)
        assert sc.name == name
        assert sc.predicates, "bundled scenarios must carry checkable predicates"

    def test_bundled_fault_classes_cover_all_three_layers(self):
        classes = set()
        for name in bundled_names():
            sc = load_scenario(bundled_path(name))
            classes.update(f.fault_class for f in sc.faults)
        assert classes == {"data_health", "node_health", "behavioral_safety"}

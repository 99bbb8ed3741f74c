"""Shared fixtures: bundled scenario runs are expensive, so each one runs
once per session (wall time captured for the runtime budgets) and every
test that inspects the trace shares the result."""
from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from halosim.harness import RunResult, run_scenario
from halosim.scenario import Scenario, load_scenario
from halosim.scenarios import bundled_path


@dataclass
class TimedRun:
    result: RunResult
    wall_s: float

    @property
    def trace(self):
        return self.result.trace

    @property
    def events(self):
        return self.result.trace.events


def timed_run(scenario: Scenario, disable: str | None = None) -> TimedRun:
    t0 = time.perf_counter()
    result = run_scenario(scenario, disable_halo_node=disable)
    return TimedRun(result=result, wall_s=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def data_health_scenario() -> Scenario:
    return load_scenario(bundled_path("data_health"))


@pytest.fixture(scope="session")
def node_health_scenario() -> Scenario:
    return load_scenario(bundled_path("node_health"))


@pytest.fixture(scope="session")
def behavioral_scenario() -> Scenario:
    return load_scenario(bundled_path("behavioral"))


@pytest.fixture(scope="session")
def data_health_run(data_health_scenario) -> TimedRun:
    return timed_run(data_health_scenario)


@pytest.fixture(scope="session")
def node_health_run(node_health_scenario) -> TimedRun:
    return timed_run(node_health_scenario)


@pytest.fixture(scope="session")
def behavioral_run(behavioral_scenario) -> TimedRun:
    return timed_run(behavioral_scenario)


@pytest.fixture(scope="session")
def behavioral_naive_run(behavioral_scenario) -> TimedRun:
    # Same scenario with the merge-vote protection switched off.
    return timed_run(behavioral_scenario, disable="behavioral")

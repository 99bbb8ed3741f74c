"""Opponent detector with a configurable error model.

One detector, one opponent, one reading per tick at most.  Real readings
are the true along-track separation plus Gaussian noise; the error model
mixes in misses (false negatives) and ghosts (false positives) drawn from
a configurable distribution.  A ghost preempts the real reading on its
tick, which is how a burst of phantom returns can hide a real target.

Draw order per tick is fixed (miss uniform, ghost uniform, then at most
one value draw) so a scenario replays byte-identically from its seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import topics
from .bus import Node
from .messages import Detection, Heartbeat
from .plant import World


def make_fp_sampler(dist: dict):
    """Ghost-range sampler from a {kind: ...} mapping."""
    kind = dist.get("kind", "uniform")
    if kind == "uniform":
        low = float(dist.get("low", -80.0))
        high = float(dist.get("high", -40.0))
        return lambda rng: float(rng.uniform(low, high))
    if kind == "normal":
        mean = float(dist["mean"])
        stddev = float(dist["stddev"])
        return lambda rng: float(mean + stddev * rng.standard_normal())
    if kind == "constant":
        value = float(dist["value"])
        return lambda rng: value
    raise ValueError(f"unknown false-positive distribution kind: {kind!r}")


@dataclass
class DetectionModel:
    fn_rate: float = 0.0
    fp_rate: float = 0.0
    noise_stddev_m: float = 0.5
    fp_dist: dict = field(default_factory=lambda: {"kind": "uniform", "low": -80.0, "high": -40.0})

    def __post_init__(self) -> None:
        self._fp_sampler = make_fp_sampler(self.fp_dist)

    def sample_ghost(self, rng: np.random.Generator) -> float:
        return self._fp_sampler(rng)


def detect_tick(
    truth_separation_m: float | None,
    model: DetectionModel,
    rng: np.random.Generator,
    stamp_ns: int,
) -> Detection | None:
    """One detector cycle; None when nothing is reported this tick."""
    miss = rng.uniform() < model.fn_rate
    ghost = rng.uniform() < model.fp_rate
    if ghost:
        return Detection(
            stamp_ns=stamp_ns,
            separation_m=model.sample_ghost(rng),
            true_positive=False,
        )
    if truth_separation_m is None or miss:
        return None
    noisy = truth_separation_m + model.noise_stddev_m * rng.standard_normal()
    return Detection(stamp_ns=stamp_ns, separation_m=float(noisy), true_positive=True)


@dataclass
class BurstWindow:
    """Temporary override of the error model, the burst-fault mechanism."""

    start_ns: int
    end_ns: int
    model: DetectionModel


class LidarNode(Node):
    name = "lidar"
    rate_hz = 20.0
    subscribes = ()
    publishes = (topics.DETECTIONS, topics.heartbeat("lidar"))

    def __init__(self, world: World, model: DetectionModel | None = None) -> None:
        self.world = world
        self.model = model or DetectionModel()
        self.bursts: list[BurstWindow] = []
        self._hb_counter = 0

    def add_burst(self, burst: BurstWindow) -> None:
        self.bursts.append(burst)

    def _active_model(self, now_ns: int) -> DetectionModel:
        for burst in self.bursts:
            if burst.start_ns <= now_ns < burst.end_ns:
                return burst.model
        return self.model

    def tick(self, now_ns: int) -> None:
        truth = self.world.true_separation(now_ns)
        detection = detect_tick(truth, self._active_model(now_ns), self.rng, now_ns)
        if detection is not None:
            self.publish(topics.DETECTIONS, detection)
        self.publish(
            topics.heartbeat(self.name),
            Heartbeat(stamp_ns=now_ns, counter=self._hb_counter),
        )
        self._hb_counter += 1

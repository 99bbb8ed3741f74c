"""Deterministic virtual-time message bus and node scheduler.

Simulation time is integer nanoseconds.  Every node is a state machine
stepped at its declared rate; delivery is mailbox-style (a message published
at tick T is visible to a subscriber at that subscriber's next tick >= T).
The scheduler is a priority queue keyed by (due time, priority, name), so a
run is a pure function of (scenario, seed): no wall clock, no iteration over
unordered containers, one seeded RNG with per-node substreams.
"""
from __future__ import annotations

import dataclasses
import enum
import heapq
import zlib
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import trace as trace_mod
from .trace import TraceLog

NANOS_PER_SEC = 1_000_000_000

# Bounded mailbox depth per (node, topic); oldest messages drop first.
MAILBOX_DEPTH = 100


class SimError(Exception):
    """Base class for simulator errors."""


class UnknownTopic(SimError):
    pass


class UnknownNode(SimError):
    pass


class PublishFromDeadNode(SimError):
    """A crashed node tried to publish: the scheduler must silence crashed
    nodes, so this always signals a harness bug rather than a scenario."""


class ResurrectCrashedNode(SimError):
    pass


class NodeStatus(enum.Enum):
    RUNNING = "running"
    STALLED = "stalled"
    CRASHED = "crashed"


@dataclass(frozen=True, slots=True)
class SimMessage:
    topic: str
    seq: int
    stamp_ns: int
    payload: Any


class Node:
    """Base class for simulated nodes.

    Subclasses set `name`, `rate_hz`, `subscribes`, `publishes` and override
    `tick`.  All randomness must come from `self.rng`.
    """

    name: str = ""
    rate_hz: float = 1.0
    subscribes: tuple[str, ...] = ()
    publishes: tuple[str, ...] = ()

    bus: "Bus"
    rng: np.random.Generator

    def attach(self, bus: "Bus") -> None:
        self.bus = bus
        self.rng = bus.rng_for(self.name)

    def take(self, topic: str) -> list[SimMessage]:
        return self.bus.take(self.name, topic)

    def take_last(self, topic: str) -> SimMessage | None:
        messages = self.take(topic)
        return messages[-1] if messages else None

    def publish(self, topic: str, payload: Any) -> SimMessage:
        return self.bus.publish(self.name, topic, payload)

    def tick(self, now_ns: int) -> None:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(slots=True)
class _NodeState:
    node: Node
    period_ns: int
    status: NodeStatus = NodeStatus.RUNNING
    stall_until_ns: int = 0
    ticks_executed: int = 0


class Bus:
    """Topic registry, mailboxes, and the virtual-time scheduler."""

    def __init__(self, seed: int, trace: TraceLog | None = None) -> None:
        self.seed = seed
        self.trace = trace if trace is not None else TraceLog()
        self.now_ns = 0
        self._topics: dict[str, type] = {}
        self._subscribers: dict[str, list[str]] = {}
        self._nodes: dict[str, _NodeState] = {}
        self._seq: dict[str, int] = {}
        # mailboxes[node][topic] -> deque[(deliver_at_ns, SimMessage)]
        self._mailboxes: dict[str, dict[str, deque]] = {}
        self._heap: list[tuple] = []
        self._callback_counter = 0
        # Topic-level fault state.
        self._drop_until: dict[str, int] = {}
        self._delay_ns: dict[str, int] = {}
        self._corrupt: dict[str, tuple[str, Any]] = {}

    # -- registry ---------------------------------------------------------

    def register_topic(self, name: str, payload_type: type) -> None:
        self._topics[name] = payload_type
        self._subscribers.setdefault(name, [])

    def add_node(self, node: Node) -> None:
        if node.name in self._nodes:
            raise SimError(f"duplicate node name {node.name!r}")
        period_ns = round(NANOS_PER_SEC / node.rate_hz)
        self._nodes[node.name] = _NodeState(node, period_ns)
        self._mailboxes[node.name] = {}
        for topic in node.subscribes:
            if topic not in self._topics:
                raise UnknownTopic(topic)
            self._subscribers[topic].append(node.name)
            self._mailboxes[node.name][topic] = deque(maxlen=MAILBOX_DEPTH)
        node.attach(self)
        # First tick lands one full period after t=0.
        heapq.heappush(self._heap, (self.now_ns + period_ns, 1, node.name))

    def node_status(self, name: str) -> NodeStatus:
        return self._require_node(name).status

    def ticks_executed(self, name: str) -> int:
        return self._require_node(name).ticks_executed

    def rng_for(self, name: str) -> np.random.Generator:
        key = zlib.crc32(name.encode())
        return np.random.default_rng(np.random.SeedSequence((self.seed, key)))

    def _require_node(self, name: str) -> _NodeState:
        try:
            return self._nodes[name]
        except KeyError:
            raise UnknownNode(name) from None

    # -- publish / deliver -------------------------------------------------

    def publish(self, node_name: str, topic: str, payload: Any) -> SimMessage:
        state = self._require_node(node_name)
        if state.status is NodeStatus.CRASHED:
            raise PublishFromDeadNode(node_name)
        try:
            payload_type = self._topics[topic]
        except KeyError:
            raise UnknownTopic(topic) from None
        if not isinstance(payload, payload_type):
            raise TypeError(
                f"topic {topic!r} carries {payload_type.__name__}, "
                f"got {type(payload).__name__}"
            )
        corrupt = self._corrupt.get(topic)
        if corrupt is not None:
            payload = dataclasses.replace(payload, **{corrupt[0]: corrupt[1]})
        seq = self._seq.get(topic, -1) + 1
        self._seq[topic] = seq
        message = SimMessage(topic, seq, self.now_ns, payload)
        self.trace.record(
            self.now_ns, trace_mod.PUBLISH, node_name, topic, seq, payload
        )
        if self.now_ns < self._drop_until.get(topic, 0):
            return message  # generated but undelivered
        deliver_at = self.now_ns + self._delay_ns.get(topic, 0)
        for subscriber in self._subscribers[topic]:
            self._mailboxes[subscriber][topic].append((deliver_at, message))
        return message

    def take(self, node_name: str, topic: str) -> list[SimMessage]:
        self._require_node(node_name)
        box = self._mailboxes[node_name].get(topic)
        if box is None:
            raise UnknownTopic(f"{node_name} does not subscribe to {topic}")
        out = []
        while box and box[0][0] <= self.now_ns:
            out.append(box.popleft()[1])
        return out

    def trace_action(self, node_name: str, action: str, **fields: Any) -> None:
        payload = {"action": action, **fields}
        self.trace.record(self.now_ns, trace_mod.HALO_ACTION, node_name, None, None, payload)

    def trace_fault(self, label: str, **fields: Any) -> None:
        payload = {"fault": label, **fields}
        self.trace.record(self.now_ns, trace_mod.FAULT, "harness", None, None, payload)

    # -- liveness and topic faults ------------------------------------------

    def inject_liveness(
        self, name: str, status: NodeStatus, stall_duration_ns: int = 0
    ) -> None:
        state = self._require_node(name)
        if state.status is NodeStatus.CRASHED and status is not NodeStatus.CRASHED:
            raise ResurrectCrashedNode(name)
        state.status = status
        if status is NodeStatus.STALLED:
            state.stall_until_ns = self.now_ns + stall_duration_ns

    def set_topic_drop(self, topic: str, until_ns: int) -> None:
        if topic not in self._topics:
            raise UnknownTopic(topic)
        self._drop_until[topic] = until_ns

    def set_topic_delay(self, topic: str, delay_ns: int) -> None:
        if topic not in self._topics:
            raise UnknownTopic(topic)
        self._delay_ns[topic] = delay_ns

    def set_value_corrupt(self, topic: str, field: str, value: Any) -> None:
        if topic not in self._topics:
            raise UnknownTopic(topic)
        self._corrupt[topic] = (field, value)

    def clear_value_corrupt(self, topic: str) -> None:
        self._corrupt.pop(topic, None)

    # -- scheduler -----------------------------------------------------------

    def schedule_callback(self, t_ns: int, fn: Callable[["Bus"], None]) -> None:
        """Run `fn` at t_ns, before any node tick due at the same instant."""
        self._callback_counter += 1
        heapq.heappush(self._heap, (t_ns, 0, self._callback_counter, fn))

    def step(self, dt_ns: int) -> list[tuple[str, int]]:
        """Advance virtual time by dt_ns, executing everything due."""
        end = self.now_ns + dt_ns
        executed: list[tuple[str, int]] = []
        while self._heap and self._heap[0][0] <= end:
            entry = heapq.heappop(self._heap)
            due, priority = entry[0], entry[1]
            self.now_ns = due
            if priority == 0:
                entry[3](self)
                continue
            name = entry[2]
            state = self._nodes[name]
            if state.status is NodeStatus.CRASHED:
                continue  # silenced forever, no reschedule
            if state.status is NodeStatus.STALLED:
                if due < state.stall_until_ns:
                    heapq.heappush(self._heap, (due + state.period_ns, 1, name))
                    continue
                state.status = NodeStatus.RUNNING
            self.trace.record(due, trace_mod.TICK, name)
            state.node.tick(due)
            state.ticks_executed += 1
            executed.append((name, due))
            heapq.heappush(self._heap, (due + state.period_ns, 1, name))
        self.now_ns = end
        return executed

    def run_until(self, t_ns: int) -> None:
        if t_ns < self.now_ns:
            raise SimError("cannot run backwards")
        self.step(t_ns - self.now_ns)

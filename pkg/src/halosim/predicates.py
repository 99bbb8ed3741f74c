"""Machine-checkable assertions over a recorded trace.

A predicate is a one-key mapping naming its form; the value holds the
form's parameters.  Event matchers select trace events by kind, node,
topic, action (sugar for a payload field equality) and arbitrary payload
field comparisons.

Forms:
  eventually: MATCH                     at least one matching event
  never: MATCH                          no matching event
  within: {after, seconds, expect}      expect within s of the first after
  not_before: {event, until}            no event match before the first until
  max_gap: {match, from_s?, to_s?, max_gap_s}
  rate: {match, from_s, duration_s, hz, tol_hz}
  count: {match, min? max? from_s? to_s?}

Anything structurally unknown raises MalformedPredicate at compile time;
a predicate that merely fails reports ok=False with a detail string.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Callable

from .trace import TraceEvent, TraceLog


class MalformedPredicate(Exception):
    pass


_OPS: dict[str, Callable] = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

_MATCH_KEYS = {"kind", "node", "topic", "action", "where"}
_FORM_KEYS = ("eventually", "never", "within", "not_before", "max_gap", "rate", "count")


def _field_value(event: TraceEvent, path: str):
    """Resolve 'payload.x.y' or a top-level event field; None if absent."""
    if path.startswith("payload."):
        value = event.payload_summary
        for part in path.split(".")[1:]:
            if not isinstance(value, dict) or part not in value:
                return None
            value = value[part]
        return value
    return getattr(event, path, None)


def compile_match(spec: dict) -> Callable[[TraceEvent], bool]:
    if not isinstance(spec, dict):
        raise MalformedPredicate(f"matcher must be a mapping, got {spec!r}")
    unknown = set(spec) - _MATCH_KEYS
    if unknown:
        raise MalformedPredicate(f"unknown matcher keys: {sorted(unknown)}")
    clauses = []
    for key in ("kind", "node", "topic"):
        if key in spec:
            expected = spec[key]
            clauses.append(lambda e, k=key, v=expected: getattr(e, k) == v)
    if "action" in spec:
        expected = spec["action"]
        clauses.append(
            lambda e, v=expected: isinstance(e.payload_summary, dict)
            and e.payload_summary.get("action") == v
        )
    for i, clause in enumerate(spec.get("where", [])):
        if not isinstance(clause, dict) or set(clause) != {"field", "op", "value"}:
            raise MalformedPredicate(
                f"where[{i}] must have exactly field/op/value, got {clause!r}"
            )
        if clause["op"] not in _OPS:
            raise MalformedPredicate(f"where[{i}].op: unknown operator {clause['op']!r}")
        op = _OPS[clause["op"]]
        path, value = clause["field"], clause["value"]

        def check(e, op=op, path=path, value=value):
            actual = _field_value(e, path)
            if actual is None:
                return False
            try:
                return bool(op(actual, value))
            except TypeError:
                return False

        clauses.append(check)
    if not clauses:
        raise MalformedPredicate("matcher selects everything; refine it")
    return lambda event: all(clause(event) for clause in clauses)


@dataclass(frozen=True)
class PredicateResult:
    ok: bool
    label: str
    detail: str


def _ns(seconds: float) -> int:
    return int(round(seconds * 1e9))


def _check_eventually(events, params) -> tuple[bool, str]:
    match = compile_match(params)
    hits = [e for e in events if match(e)]
    if hits:
        return True, f"first at t={hits[0].t_ns / 1e9:.3f}s ({len(hits)} total)"
    return False, "no matching event"


def _check_never(events, params) -> tuple[bool, str]:
    match = compile_match(params)
    hits = [e for e in events if match(e)]
    if hits:
        return False, f"matched at t={hits[0].t_ns / 1e9:.3f}s ({len(hits)} total)"
    return True, "no matching event"


def _check_within(events, params) -> tuple[bool, str]:
    _expect_keys(params, {"after", "seconds", "expect"}, "within")
    after = compile_match(params["after"])
    expect = compile_match(params["expect"])
    window_ns = _ns(float(params["seconds"]))
    anchor = next((e for e in events if after(e)), None)
    if anchor is None:
        return False, "anchor event never occurred"
    deadline = anchor.t_ns + window_ns
    for e in events:
        if e.t_ns < anchor.t_ns:
            continue
        if e.t_ns > deadline:
            break
        if expect(e):
            delay_s = (e.t_ns - anchor.t_ns) / 1e9
            return True, f"satisfied {delay_s:.3f}s after anchor"
    return False, (
        f"nothing matched within {params['seconds']}s of anchor at "
        f"t={anchor.t_ns / 1e9:.3f}s"
    )


def _check_not_before(events, params) -> tuple[bool, str]:
    _expect_keys(params, {"event", "until"}, "not_before")
    event_match = compile_match(params["event"])
    until_match = compile_match(params["until"])
    for e in events:
        if until_match(e):
            return True, f"gate opened at t={e.t_ns / 1e9:.3f}s"
        if event_match(e):
            return False, f"event at t={e.t_ns / 1e9:.3f}s before its gate"
    return True, "gate never opened and event never occurred"


def _check_max_gap(events, params) -> tuple[bool, str]:
    _expect_keys(params, {"match", "max_gap_s", "from_s", "to_s"}, "max_gap",
                 optional={"from_s", "to_s"})
    match = compile_match(params["match"])
    limit_ns = _ns(float(params["max_gap_s"]))
    from_ns = _ns(float(params["from_s"])) if "from_s" in params else None
    to_ns = _ns(float(params["to_s"])) if "to_s" in params else None
    stamps = [
        e.t_ns
        for e in events
        if match(e)
        and (from_ns is None or e.t_ns >= from_ns)
        and (to_ns is None or e.t_ns <= to_ns)
    ]
    if not stamps:
        return False, "no matching events in window"
    bounds = list(stamps)
    if from_ns is not None:
        bounds.insert(0, from_ns)
    if to_ns is not None:
        bounds.append(to_ns)
    worst = max(b - a for a, b in zip(bounds, bounds[1:]))
    if worst <= limit_ns:
        return True, f"worst gap {worst / 1e9:.3f}s over {len(stamps)} events"
    return False, f"gap of {worst / 1e9:.3f}s exceeds {params['max_gap_s']}s"


def _check_rate(events, params) -> tuple[bool, str]:
    _expect_keys(params, {"match", "from_s", "duration_s", "hz", "tol_hz"}, "rate")
    match = compile_match(params["match"])
    start_ns = _ns(float(params["from_s"]))
    duration_s = float(params["duration_s"])
    end_ns = start_ns + _ns(duration_s)
    count = sum(1 for e in events if match(e) and start_ns <= e.t_ns < end_ns)
    rate = count / duration_s
    target, tol = float(params["hz"]), float(params["tol_hz"])
    if abs(rate - target) <= tol:
        return True, f"measured {rate:.2f} Hz"
    return False, f"measured {rate:.2f} Hz, wanted {target} +- {tol}"


def _check_count(events, params) -> tuple[bool, str]:
    _expect_keys(params, {"match", "min", "max", "from_s", "to_s"}, "count",
                 optional={"min", "max", "from_s", "to_s"})
    if "min" not in params and "max" not in params:
        raise MalformedPredicate("count: needs min and/or max")
    match = compile_match(params["match"])
    from_ns = _ns(float(params["from_s"])) if "from_s" in params else None
    to_ns = _ns(float(params["to_s"])) if "to_s" in params else None
    count = sum(
        1
        for e in events
        if match(e)
        and (from_ns is None or e.t_ns >= from_ns)
        and (to_ns is None or e.t_ns <= to_ns)
    )
    if "min" in params and count < int(params["min"]):
        return False, f"{count} matches, wanted >= {params['min']}"
    if "max" in params and count > int(params["max"]):
        return False, f"{count} matches, wanted <= {params['max']}"
    return True, f"{count} matches"


def _expect_keys(params, allowed: set, form: str, optional: set = frozenset()):
    if not isinstance(params, dict):
        raise MalformedPredicate(f"{form}: parameters must be a mapping")
    unknown = set(params) - allowed
    if unknown:
        raise MalformedPredicate(f"{form}: unknown keys {sorted(unknown)}")
    for key in allowed - optional:
        if key not in params:
            raise MalformedPredicate(f"{form}: missing key {key!r}")


_CHECKERS = {
    "eventually": _check_eventually,
    "never": _check_never,
    "within": _check_within,
    "not_before": _check_not_before,
    "max_gap": _check_max_gap,
    "rate": _check_rate,
    "count": _check_count,
}


def check_predicate(events: list[TraceEvent], spec: dict) -> PredicateResult:
    if not isinstance(spec, dict):
        raise MalformedPredicate(f"predicate must be a mapping, got {spec!r}")
    label = str(spec.get("label", ""))
    forms = [k for k in spec if k in _CHECKERS]
    unknown = [k for k in spec if k not in _CHECKERS and k != "label"]
    if unknown:
        raise MalformedPredicate(f"unknown predicate keys: {sorted(unknown)}")
    if len(forms) != 1:
        raise MalformedPredicate(
            f"predicate needs exactly one form of {list(_FORM_KEYS)}, got {forms}"
        )
    form = forms[0]
    ok, detail = _CHECKERS[form](events, spec[form])
    if not label:
        label = form
    return PredicateResult(ok=ok, label=label, detail=detail)


def assert_trace(trace: TraceLog, specs: list[dict]) -> list[PredicateResult]:
    events = trace.events
    return [check_predicate(events, spec) for spec in specs]

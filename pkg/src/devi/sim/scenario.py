"""Scenario files: timed world and interaction events as JSON.

See docs/scenario-schema.md for the document layout.  Parsing reports the
offending line where it can be located in the source text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional


class ScenarioParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        suffix = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{suffix}")


_ACTIONS: dict[str, set[str]] = {
    "spawn": {"visitor_id", "bearing_deg", "distance_mm", "identity", "face_visible", "face_size_px"},
    "move": {"visitor_id", "bearing_deg", "distance_mm"},
    "set_face": {"visitor_id", "visible", "size_px"},
    "say": {"visitor_id", "text", "expect_intent"},
    "name": {"visitor_id", "text"},
    "consent": {"visitor_id", "answer"},
    "despawn": {"visitor_id"},
}
_REQUIRED: dict[str, set[str]] = {
    "spawn": {"visitor_id", "bearing_deg", "distance_mm"},
    "move": {"visitor_id"},
    "set_face": {"visitor_id"},
    "say": {"visitor_id", "text"},
    "name": {"visitor_id", "text"},
    "consent": {"visitor_id", "answer"},
    "despawn": {"visitor_id"},
}


@dataclass(frozen=True)
class ScenarioEvent:
    at_ms: int
    action: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    name: str
    events: tuple[ScenarioEvent, ...]
    people: tuple[dict[str, Any], ...] = ()
    config_overrides: dict[str, Any] = field(default_factory=dict)
    duration_ms: Optional[int] = None

    @property
    def end_ms(self) -> int:
        last = max((e.at_ms for e in self.events), default=0)
        return self.duration_ms if self.duration_ms is not None else last


def _event_line(text: str, index: int) -> Optional[int]:
    """Line of the index-th event object, located by its "action" key."""
    matches = list(re.finditer(r'"action"', text))
    if index < len(matches):
        return text.count("\n", 0, matches[index].start()) + 1
    return None


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario document must be a JSON object")

    raw_events = doc.get("events", [])
    if not isinstance(raw_events, list):
        raise ScenarioParseError("'events' must be an array")

    events: list[ScenarioEvent] = []
    for i, raw in enumerate(raw_events):
        line = _event_line(text, i)
        if not isinstance(raw, dict):
            raise ScenarioParseError(f"event {i} must be an object", line)
        if "at_ms" not in raw or "action" not in raw:
            raise ScenarioParseError(f"event {i} needs 'at_ms' and 'action'", line)
        action = raw["action"]
        if action not in _ACTIONS:
            raise ScenarioParseError(f"event {i}: unknown action {action!r}", line)
        at_ms = raw["at_ms"]
        if not isinstance(at_ms, int) or at_ms < 0:
            raise ScenarioParseError(f"event {i}: 'at_ms' must be a non-negative integer", line)
        params = {k: v for k, v in raw.items() if k not in ("at_ms", "action")}
        extra = set(params) - _ACTIONS[action]
        if extra:
            raise ScenarioParseError(f"event {i}: unknown fields {sorted(extra)}", line)
        missing = _REQUIRED[action] - set(params)
        if missing:
            raise ScenarioParseError(f"event {i}: missing fields {sorted(missing)}", line)
        events.append(ScenarioEvent(at_ms=at_ms, action=action, params=params))

    events.sort(key=lambda e: e.at_ms)  # stable: same-time events keep file order

    people = doc.get("people", [])
    for i, person in enumerate(people):
        if not isinstance(person, dict) or "name" not in person:
            raise ScenarioParseError(f"people[{i}] needs at least a 'name'")

    duration = doc.get("duration_ms")
    if duration is not None and (not isinstance(duration, int) or duration < 0):
        raise ScenarioParseError("'duration_ms' must be a non-negative integer")

    return Scenario(
        name=doc.get("name", "unnamed"),
        events=tuple(events),
        people=tuple(people),
        config_overrides=doc.get("config", {}),
        duration_ms=duration,
    )


def load_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())

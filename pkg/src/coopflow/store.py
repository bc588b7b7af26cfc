"""Append-only event log: one JSON object per line, fsynced per append.

The log is the store: instance state is rebuilt by replaying it, so a
request must never be acknowledged before its events hit disk.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import CorruptLogError
from .runtime import EngineEvent, EventKind


def event_to_line(ev: EngineEvent) -> str:
    return json.dumps(ev.to_json_obj(), separators=(",", ":")) + "\n"


def event_from_obj(obj: object) -> EngineEvent:
    if not isinstance(obj, dict):
        raise CorruptLogError("event line is not a JSON object")
    try:
        seq = obj["seq"]
        instance = obj["instance"]
        at = obj["at"]
        kind = EventKind(obj["kind"])
        payload = obj["payload"]
    except (KeyError, ValueError) as exc:
        raise CorruptLogError(f"bad event line: {exc}")
    if not isinstance(seq, int) or not isinstance(at, int) or not isinstance(instance, str):
        raise CorruptLogError("bad event line: wrong field types")
    if not isinstance(payload, dict):
        raise CorruptLogError("bad event line: payload must be an object")
    return EngineEvent(seq, instance, at, kind, payload)


class EventLog:
    """Single-writer append log for one instance."""

    def __init__(self, path: "Path | str"):
        self.path = Path(path)
        self._fh = None

    def append(self, events: "list[EngineEvent]") -> None:
        if not events:
            return
        if self._fh is None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "ab")
        data = "".join(event_to_line(ev) for ev in events).encode("utf-8")
        self._fh.write(data)
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def read_all(self) -> "list[EngineEvent]":
        events: list[EngineEvent] = []
        try:
            raw = self.path.read_bytes()
        except FileNotFoundError:
            raise CorruptLogError(f"no log at {self.path}")
        for lineno, line in enumerate(raw.split(b"\n"), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise CorruptLogError(f"{self.path.name}: line {lineno} is not valid JSON")
            events.append(event_from_obj(obj))
        for i, ev in enumerate(events, start=1):
            if ev.seq != i:
                raise CorruptLogError(
                    f"{self.path.name}: seq gap at line position {i} (found seq {ev.seq})")
        return events

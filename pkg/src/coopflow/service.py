"""Engine service: definition registry, per-instance single-writer mutation
with durable event logging, and ordered event subscriptions.

Mutations run on a clone of the published snapshot; events are appended
(and fsynced) to the log before the clone is published, so a crash at any
request boundary replays to exactly the acknowledged state.
"""
from __future__ import annotations

import threading
import time
import uuid
from pathlib import Path
from typing import Callable, Iterator, Optional

from . import engine, model
from .errors import (
    DuplicateInstanceIdError,
    InvalidDefinitionError,
    UnknownDefinitionError,
    UnknownInstanceError,
)
from .model import ProcessDefinition
from .router import fetch_inputs, input_view_jsonable
from .runtime import EngineEvent, ProcessInstance
from .store import EventLog


def _default_clock() -> int:
    return int(time.time() * 1000)


class _InstanceSlot:
    def __init__(self, published: ProcessInstance, events: "list[EngineEvent]",
                 log: Optional[EventLog]):
        self.write_lock = threading.Lock()  # serializes mutations of this instance
        self.cond = threading.Condition()   # guards published/events, wakes subscribers
        self.published = published
        self.events = events
        self.log = log


class EngineService:
    """All state behind one object; safe for concurrent callers."""

    def __init__(self, data_dir: "str | Path | None" = None,
                 clock: "Callable[[], int] | None" = None):
        self._clock = clock or _default_clock
        self._lock = threading.Lock()  # definition map + slot map membership
        self._definitions: dict[str, ProcessDefinition] = {}
        self._slots: dict[str, _InstanceSlot] = {}
        self._data_dir = Path(data_dir) if data_dir is not None else None
        if self._data_dir is not None:
            self._recover()

    # --- persistence layout ---

    def _definitions_dir(self) -> Path:
        return self._data_dir / "definitions"

    def _instances_dir(self) -> Path:
        return self._data_dir / "instances"

    def _recover(self) -> None:
        ddir = self._definitions_dir()
        if ddir.is_dir():
            for path in sorted(ddir.glob("*.json")):
                defn = model.parse_definition(path.read_text("utf-8"))
                self._definitions[defn.name] = defn
        idir = self._instances_dir()
        if idir.is_dir():
            for path in sorted(idir.glob("*.events.jsonl")):
                log = EventLog(path)
                events = log.read_all()
                inst = engine.replay_events(events)
                self._slots[inst.id] = _InstanceSlot(inst, events, log)

    # --- definitions ---

    def load_definition(self, document: str) -> dict:
        defn = model.parse_definition(document)
        report = model.validate_definition(defn)
        if not report.ok:
            raise InvalidDefinitionError(report=report)
        with self._lock:
            self._definitions[defn.name] = defn
            if self._data_dir is not None:
                ddir = self._definitions_dir()
                ddir.mkdir(parents=True, exist_ok=True)
                (ddir / f"{defn.name}.json").write_text(
                    model.serialize_definition(defn), "utf-8")
        return {"name": defn.name, "version": defn.version}

    def get_definition(self, name: str) -> dict:
        with self._lock:
            defn = self._definitions.get(name)
        if defn is None:
            raise UnknownDefinitionError(f"no definition named '{name}'")
        return model.definition_to_document(defn)

    # --- instances ---

    def create_instance(self, definition: str, instance_id: "str | None" = None,
                        anticipation: bool = True) -> dict:
        with self._lock:
            defn = self._definitions.get(definition)
        if defn is None:
            raise UnknownDefinitionError(f"no definition named '{definition}'")
        iid = instance_id or uuid.uuid4().hex[:12]
        with self._lock:
            if iid in self._slots:
                raise DuplicateInstanceIdError(f"instance '{iid}' already exists")
            inst, events = engine.create_instance(defn, iid, anticipation, self._clock())
            log = None
            if self._data_dir is not None:
                log = EventLog(self._instances_dir() / f"{iid}.events.jsonl")
                log.append(events)  # durable before the instance becomes visible
            self._slots[iid] = _InstanceSlot(inst, list(events), log)
        return {"id": iid}

    def _slot(self, instance_id: str) -> _InstanceSlot:
        with self._lock:
            slot = self._slots.get(instance_id)
        if slot is None:
            raise UnknownInstanceError(f"no instance '{instance_id}'")
        return slot

    def _mutate(self, instance_id: str,
                fn: "Callable[[ProcessInstance, int], list[EngineEvent]]") -> "list[EngineEvent]":
        slot = self._slot(instance_id)
        with slot.write_lock:
            work = slot.published.clone()
            events = fn(work, self._clock())
            if events:
                if slot.log is not None:
                    slot.log.append(events)  # durable before visible
                with slot.cond:
                    slot.published = work
                    slot.events.extend(events)
                    slot.cond.notify_all()
        return events

    def start(self, instance_id: str, activity: str, actor: "str | None" = None) -> "list[EngineEvent]":
        return self._mutate(instance_id,
                            lambda inst, now: engine.start_activity(inst, activity, actor, now))

    def terminate(self, instance_id: str, activity: str, output: "dict[str, object]") -> "list[EngineEvent]":
        return self._mutate(instance_id,
                            lambda inst, now: engine.terminate_activity(inst, activity, output, now))

    def cancel(self, instance_id: str, activity: str) -> "list[EngineEvent]":
        return self._mutate(instance_id,
                            lambda inst, now: engine.cancel_activity(inst, activity, now))

    def emit(self, instance_id: str, activity: str, to: str, feedback: bool,
             record: "dict[str, object]") -> "list[EngineEvent]":
        return self._mutate(instance_id,
                            lambda inst, now: engine.emit_data(inst, activity, to, feedback, record, now))

    # --- reads ---

    def instance(self, instance_id: str) -> ProcessInstance:
        return self._slot(instance_id).published

    def instance_status(self, instance_id: str) -> dict:
        return engine.instance_status(self.instance(instance_id))

    def worklist(self, instance_id: str, actor: "str | None" = None) -> dict:
        return engine.worklist(self.instance(instance_id), actor)

    def inputs(self, instance_id: str, activity: str) -> dict:
        inst = self.instance(instance_id)
        return input_view_jsonable(inst.definition, fetch_inputs(inst, activity))

    def events_snapshot(self, instance_id: str, from_seq: int = 0) -> "list[EngineEvent]":
        slot = self._slot(instance_id)
        with slot.cond:
            return slot.events[from_seq:]

    def instance_ids(self) -> "list[str]":
        with self._lock:
            return sorted(self._slots)

    def subscribe(self, instance_id: str, from_seq: int = 0,
                  poll_timeout: float = 15.0) -> "Iterator[EngineEvent | None]":
        """Yield every event with seq > from_seq in order, then block for
        future ones. Yields None on poll timeout so callers can heartbeat
        or drop dead connections; never terminates by itself."""
        slot = self._slot(instance_id)  # unknown instance must fail here, not on first next()

        def follow() -> "Iterator[EngineEvent | None]":
            next_seq = from_seq + 1
            while True:
                with slot.cond:
                    batch = slot.events[next_seq - 1:]
                    if not batch:
                        slot.cond.wait(timeout=poll_timeout)
                        batch = slot.events[next_seq - 1:]
                if batch:
                    for ev in batch:
                        yield ev
                    next_seq = batch[-1].seq + 1
                else:
                    yield None

        return follow()

    def close(self) -> None:
        with self._lock:
            for slot in self._slots.values():
                if slot.log is not None:
                    slot.log.close()

"""Activity lifecycle engine.

State derivation is a pure function of predecessor states and edge liveness:

  - an incoming edge is dead iff its source is Cancelled or it is an
    unchosen branch of a decided xor split; edges out of an undecided xor
    split are unresolved; everything else is live;
  - an unstarted activity with incoming edges all dead is Cancelled;
  - it is Ready when nothing is unresolved and every live source is
    Terminated (or it has no incoming edges at all);
  - it is Anticipable when anticipation is on, nothing is unresolved, every
    live source has at least started, and at least one has not finished;
  - otherwise it keeps its current pre-start state.

Anticipation relaxes start eligibility only, never termination: terminate
requires Executing, and an Anticipating activity reaches Executing solely
through promotion once all its live predecessors have terminated.

Every mutation ends with a settle pass (derive sweep in canonical order,
then promotions, then the completion check), so published instances are
always at a fixpoint and event transcripts are deterministic.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

from . import model, router
from .errors import (
    ConditionTypeError,
    CoopflowError,
    CorruptLogError,
    IllegalProducerStateError,
    IllegalTransitionError,
    InvalidDefinitionError,
    MissingFieldError,
    UnknownActivityError,
)
from .model import ProcessDefinition, SplitKind
from .runtime import (
    ALLOWED_TRANSITIONS,
    FINAL_STATES,
    STARTED_STATES,
    ActivityInstance,
    ActivityState,
    EngineEvent,
    EventKind,
    InstanceStatus,
    ProcessInstance,
    Provenance,
)

_ACTIVE = (ActivityState.EXECUTING, ActivityState.ANTICIPATING)


class EdgeLiveness(Enum):
    LIVE = "live"
    DEAD = "dead"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class _DefIndex:
    order: tuple[str, ...]
    activity_map: "dict[str, model.ActivityDef]"
    incoming_control: "dict[str, tuple[int, ...]]"
    outgoing_control: "dict[str, tuple[int, ...]]"


@lru_cache(maxsize=128)
def _index(defn: ProcessDefinition) -> _DefIndex:
    incoming: dict[str, list[int]] = {a.name: [] for a in defn.activities}
    outgoing: dict[str, list[int]] = {a.name: [] for a in defn.activities}
    for i, e in enumerate(defn.control_edges):
        outgoing[e.source].append(i)
        incoming[e.target].append(i)
    return _DefIndex(
        order=tuple(model.canonical_order(defn)),
        activity_map={a.name: a for a in defn.activities},
        incoming_control={n: tuple(v) for n, v in incoming.items()},
        outgoing_control={n: tuple(v) for n, v in outgoing.items()},
    )


def classify_edge(inst: ProcessInstance, edge_index: int) -> EdgeLiveness:
    defn: ProcessDefinition = inst.definition
    edge = defn.control_edges[edge_index]
    if inst.activities[edge.source].state is ActivityState.CANCELLED:
        return EdgeLiveness.DEAD
    if _index(defn).activity_map[edge.source].split_kind is SplitKind.XOR:
        chosen = inst.xor_choices.get(edge.source)
        if chosen is None:
            return EdgeLiveness.UNRESOLVED
        return EdgeLiveness.LIVE if chosen == edge_index else EdgeLiveness.DEAD
    return EdgeLiveness.LIVE


def derive_state(inst: ProcessInstance, name: str) -> ActivityState:
    act = inst.activities.get(name)
    if act is None:
        raise UnknownActivityError(f"no activity named '{name}'")
    if act.state in STARTED_STATES or act.state is ActivityState.CANCELLED:
        return act.state
    defn: ProcessDefinition = inst.definition
    incoming = _index(defn).incoming_control.get(name, ())
    if not incoming:
        return ActivityState.READY
    live_sources: list[ActivityState] = []
    unresolved = dead = 0
    for ei in incoming:
        kind = classify_edge(inst, ei)
        if kind is EdgeLiveness.DEAD:
            dead += 1
        elif kind is EdgeLiveness.UNRESOLVED:
            unresolved += 1
        else:
            live_sources.append(inst.activities[defn.control_edges[ei].source].state)
    if dead == len(incoming):
        return ActivityState.CANCELLED
    if unresolved == 0 and live_sources:
        if all(s is ActivityState.TERMINATED for s in live_sources):
            return ActivityState.READY
        if (inst.anticipation_enabled
                and all(s in STARTED_STATES for s in live_sources)):
            return ActivityState.ANTICIPABLE
    return act.state


def _set_state(act: ActivityInstance, new: ActivityState, at: int) -> None:
    old = act.state
    if new not in ALLOWED_TRANSITIONS[old]:
        raise CoopflowError(f"engine bug: transition {old.value} -> {new.value} on '{act.name}'")
    act.state = new
    if new is ActivityState.ANTICIPATING:
        act.anticipated = True
        act.started_at = at
    elif new is ActivityState.EXECUTING and old is ActivityState.READY:
        act.started_at = at
    elif new is ActivityState.TERMINATED:
        act.terminated_at = at


def _clamp(inst: ProcessInstance, now: int) -> int:
    at = max(now, inst.last_at)
    inst.last_at = at
    return at


def _next_event(inst: ProcessInstance, kind: EventKind, payload: dict, at: int) -> EngineEvent:
    inst.seq += 1
    return EngineEvent(inst.seq, inst.id, at, kind, payload)


def _change_state(inst: ProcessInstance, name: str, new: ActivityState, at: int,
                  events: "list[EngineEvent]", extra: "dict | None" = None) -> None:
    act = inst.activities[name]
    payload = {"activity": name, "from": act.state.value, "to": new.value}
    if extra:
        payload.update(extra)
    _set_state(act, new, at)
    events.append(_next_event(inst, EventKind.ACTIVITY_STATE_CHANGED, payload, at))


def _all_live_preds_terminated(inst: ProcessInstance, name: str) -> bool:
    defn: ProcessDefinition = inst.definition
    for ei in _index(defn).incoming_control.get(name, ()):
        kind = classify_edge(inst, ei)
        if kind is EdgeLiveness.UNRESOLVED:
            return False
        if kind is EdgeLiveness.LIVE:
            src = defn.control_edges[ei].source
            if inst.activities[src].state is not ActivityState.TERMINATED:
                return False
    return True


def _settle(inst: ProcessInstance, at: int) -> "list[EngineEvent]":
    """Sweep derived states to a fixpoint, promote, check completion.

    One pass in canonical (topological) order already reaches the fixpoint
    because liveness only depends on earlier activities; the loop guards the
    invariant rather than assuming it.
    """
    idx = _index(inst.definition)
    events: list[EngineEvent] = []
    changed = True
    while changed:
        changed = False
        for name in idx.order:
            act = inst.activities[name]
            if act.state in STARTED_STATES or act.state is ActivityState.CANCELLED:
                continue
            new = derive_state(inst, name)
            if new is not act.state:
                _change_state(inst, name, new, at, events)
                changed = True
    for name in idx.order:
        act = inst.activities[name]
        if act.state is ActivityState.ANTICIPATING and _all_live_preds_terminated(inst, name):
            _change_state(inst, name, ActivityState.EXECUTING, at, events)
    if (inst.status is InstanceStatus.RUNNING
            and all(a.state in FINAL_STATES for a in inst.activities.values())):
        inst.status = InstanceStatus.COMPLETED
        events.append(_next_event(inst, EventKind.INSTANCE_COMPLETED, {}, at))
    return events


# --- actions ---

def create_instance(defn: ProcessDefinition, instance_id: str,
                    anticipation_enabled: bool, now: int = 0,
                    ) -> "tuple[ProcessInstance, list[EngineEvent]]":
    report = model.validate_definition(defn)
    if not report.ok:
        raise InvalidDefinitionError(report=report)
    inst = ProcessInstance(
        id=instance_id,
        definition=defn,
        anticipation_enabled=anticipation_enabled,
        activities={a.name: ActivityInstance(a.name) for a in defn.activities},
    )
    at = _clamp(inst, now)
    events = [_next_event(inst, EventKind.DEFINITION_LOADED, {
        "definition": model.definition_to_document(defn),
        "anticipation": anticipation_enabled,
    }, at)]
    events.extend(_settle(inst, at))
    return inst, events


def start_activity(inst: ProcessInstance, name: str, actor: "str | None" = None,
                   now: int = 0) -> "list[EngineEvent]":
    act = inst.activities.get(name)
    if act is None:
        raise UnknownActivityError(f"no activity named '{name}'")
    if act.state is ActivityState.READY:
        new = ActivityState.EXECUTING
    elif act.state is ActivityState.ANTICIPABLE:
        new = ActivityState.ANTICIPATING
    else:
        raise IllegalTransitionError(name, act.state, "start")
    at = _clamp(inst, now)
    events: list[EngineEvent] = []
    _change_state(inst, name, new, at, events, extra={"actor": actor})
    events.extend(_settle(inst, at))
    return events


def _check_conditions(defn: ProcessDefinition, name: str,
                      output: "dict[str, object]") -> "tuple[int, str]":
    """Pick the xor branch: first condition true in declared order, else the
    default. All referenced fields are checked up front so a terminate never
    half-applies."""
    idx = _index(defn)
    branch_edges = [(ei, defn.control_edges[ei]) for ei in idx.outgoing_control[name]]
    for ei, edge in branch_edges:
        cond = edge.condition
        if cond is None:
            continue
        if cond.field not in output:
            raise MissingFieldError(cond.field)
        if cond.op in model.ORDERING_OPS and not model.is_number(output[cond.field]):
            raise ConditionTypeError(
                f"cannot order non-numeric value {output[cond.field]!r} against field '{cond.field}'")
    default_index: "int | None" = None
    for ei, edge in branch_edges:
        if edge.is_default:
            default_index = ei
            continue
        if edge.condition.matches(output[edge.condition.field]):
            return ei, edge.target
    if default_index is None:
        raise CoopflowError(f"engine bug: xor split '{name}' has no default branch")
    return default_index, defn.control_edges[default_index].target


def terminate_activity(inst: ProcessInstance, name: str, output: "dict[str, object]",
                       now: int = 0) -> "list[EngineEvent]":
    act = inst.activities.get(name)
    if act is None:
        raise UnknownActivityError(f"no activity named '{name}'")
    if act.state is not ActivityState.EXECUTING:
        raise IllegalTransitionError(name, act.state, "terminate")
    defn: ProcessDefinition = inst.definition
    idx = _index(defn)
    # Validate everything fallible before the first mutation: terminate is atomic.
    prepared = router.prepare_final_outputs(defn, name, output)
    chosen: "tuple[int, str] | None" = None
    if idx.activity_map[name].split_kind is SplitKind.XOR and idx.outgoing_control.get(name):
        chosen = _check_conditions(defn, name, output)
    at = _clamp(inst, now)
    events: list[EngineEvent] = []
    _change_state(inst, name, ActivityState.TERMINATED, at, events)
    for edge_index, pkt in router.commit_final_outputs(inst, prepared, at):
        events.append(_next_event(
            inst, EventKind.DATA_EMITTED, router.emit_payload(defn, edge_index, pkt), at))
    if chosen is not None:
        edge_index, target = chosen
        inst.xor_choices[name] = edge_index
        events.append(_next_event(inst, EventKind.CONDITION_EVALUATED, {
            "activity": name, "edge_index": edge_index, "target": target,
        }, at))
    events.extend(_settle(inst, at))
    return events


def cancel_activity(inst: ProcessInstance, name: str, now: int = 0) -> "list[EngineEvent]":
    act = inst.activities.get(name)
    if act is None:
        raise UnknownActivityError(f"no activity named '{name}'")
    if act.state not in (ActivityState.INITIAL, ActivityState.READY, ActivityState.ANTICIPABLE):
        raise IllegalTransitionError(name, act.state, "cancel")
    at = _clamp(inst, now)
    events: list[EngineEvent] = []
    _change_state(inst, name, ActivityState.CANCELLED, at, events)
    events.extend(_settle(inst, at))
    return events


def emit_data(inst: ProcessInstance, producer: str, to: str, feedback: bool,
              values: "dict[str, object]", now: int = 0) -> "list[EngineEvent]":
    act = inst.activities.get(producer)
    if act is None:
        raise UnknownActivityError(f"no activity named '{producer}'")
    defn: ProcessDefinition = inst.definition
    edge_index = router.resolve_data_edge(defn, producer, to, feedback)
    if act.state not in _ACTIVE:
        raise IllegalProducerStateError(
            f"activity '{producer}' is {act.state.value}; emitting requires Executing or Anticipating")
    at = _clamp(inst, now)
    pkt = router.emit_provisional(inst, edge_index, values, at)
    return [_next_event(inst, EventKind.DATA_EMITTED, router.emit_payload(defn, edge_index, pkt), at)]


# --- read-only projections ---

def worklist(inst: ProcessInstance, actor: "str | None" = None) -> dict:
    idx = _index(inst.definition)
    buckets: dict[str, list] = {
        "executing": [], "anticipating": [], "ready": [], "anticipable": [],
    }
    key_for = {
        ActivityState.EXECUTING: "executing",
        ActivityState.ANTICIPATING: "anticipating",
        ActivityState.READY: "ready",
        ActivityState.ANTICIPABLE: "anticipable",
    }
    for name in idx.order:
        key = key_for.get(inst.activities[name].state)
        if key is None:
            continue
        adef = idx.activity_map[name]
        # Unassigned activities are everyone's work.
        if actor is not None and adef.assignee is not None and adef.assignee != actor:
            continue
        buckets[key].append({
            "name": name,
            "assignee": adef.assignee,
            "stale_inputs": router.has_stale_input(inst, name),
        })
    return buckets


def instance_status(inst: ProcessInstance) -> dict:
    defn: ProcessDefinition = inst.definition
    idx = _index(defn)
    activities = []
    for name in idx.order:
        act = inst.activities[name]
        adef = idx.activity_map[name]
        activities.append({
            "name": name,
            "state": act.state.value,
            "assignee": adef.assignee,
            "description": adef.description,
            "started_at": act.started_at,
            "terminated_at": act.terminated_at,
            "anticipated": act.anticipated,
        })
    choices = {}
    for split, ei in sorted(inst.xor_choices.items()):
        choices[split] = {"edge_index": ei, "target": defn.control_edges[ei].target}
    return {
        "id": inst.id,
        "definition": {"name": defn.name, "version": defn.version},
        "status": inst.status.value,
        "anticipation_enabled": inst.anticipation_enabled,
        "seq": inst.seq,
        "anticipated_count": sum(1 for a in inst.activities.values() if a.anticipated),
        "activities": activities,
        "xor_choices": choices,
    }


# --- replay ---

def replay_events(events: "list[EngineEvent]") -> ProcessInstance:
    """Fold an event list back into the exact instance that produced it."""
    if not events:
        raise CorruptLogError("empty log: missing DefinitionLoaded")
    first = events[0]
    if first.kind is not EventKind.DEFINITION_LOADED or first.seq != 1:
        raise CorruptLogError("log must begin with DefinitionLoaded at seq 1")
    try:
        defn = model.parse_definition(json.dumps(first.payload["definition"]))
        anticipation = bool(first.payload["anticipation"])
    except CoopflowError as exc:
        raise CorruptLogError(f"embedded definition does not parse: {exc.message}")
    except KeyError as exc:
        raise CorruptLogError(f"DefinitionLoaded payload missing {exc}")
    inst = ProcessInstance(
        id=first.instance,
        definition=defn,
        anticipation_enabled=anticipation,
        activities={a.name: ActivityInstance(a.name) for a in defn.activities},
        seq=1,
        last_at=first.at,
    )
    for ev in events[1:]:
        if ev.seq != inst.seq + 1:
            raise CorruptLogError(f"seq gap: expected {inst.seq + 1}, got {ev.seq}")
        if ev.instance != inst.id:
            raise CorruptLogError(f"event {ev.seq} belongs to instance '{ev.instance}'")
        inst.seq = ev.seq
        inst.last_at = max(inst.last_at, ev.at)
        p = ev.payload
        try:
            if ev.kind is EventKind.ACTIVITY_STATE_CHANGED:
                act = inst.activities.get(p["activity"])
                if act is None:
                    raise CorruptLogError(f"event {ev.seq} names unknown activity '{p['activity']}'")
                frm = ActivityState(p["from"])
                to = ActivityState(p["to"])
                if act.state is not frm:
                    raise CorruptLogError(
                        f"event {ev.seq}: '{act.name}' is {act.state.value}, log says {frm.value}")
                _set_state(act, to, ev.at)
            elif ev.kind is EventKind.CONDITION_EVALUATED:
                inst.xor_choices[p["activity"]] = int(p["edge_index"])
            elif ev.kind is EventKind.DATA_EMITTED:
                pkt = router.store_packet(
                    inst, int(p["edge_index"]), Provenance(p["provenance"]),
                    base64.b64decode(p["message"]), ev.at)
                if pkt.packet_seq != p["packet_seq"]:
                    raise CorruptLogError(
                        f"event {ev.seq}: packet seq {p['packet_seq']} does not match history")
            elif ev.kind is EventKind.INSTANCE_COMPLETED:
                inst.status = InstanceStatus.COMPLETED
            elif ev.kind is EventKind.DEFINITION_LOADED:
                raise CorruptLogError(f"event {ev.seq}: duplicate DefinitionLoaded")
        except CorruptLogError:
            raise
        except (KeyError, ValueError, TypeError, IndexError, CoopflowError) as exc:
            raise CorruptLogError(f"event {ev.seq} does not apply: {exc}")
    return inst

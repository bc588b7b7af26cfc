"""Runtime state: activity lifecycles, process instances, engine events,
routed data packets.

Instances mutate only inside the engine's single-writer section; published
snapshots are treated as immutable, so readers get clone() copies or promise
not to write.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional


class ActivityState(str, Enum):
    INITIAL = "Initial"
    READY = "Ready"
    ANTICIPABLE = "Anticipable"
    EXECUTING = "Executing"
    ANTICIPATING = "Anticipating"
    TERMINATED = "Terminated"
    CANCELLED = "Cancelled"


# States an activity has been "started" in: it left the pre-start pool and
# derive_state no longer reassigns it (promotion is the one exception).
STARTED_STATES = frozenset({
    ActivityState.EXECUTING,
    ActivityState.ANTICIPATING,
    ActivityState.TERMINATED,
})

FINAL_STATES = frozenset({ActivityState.TERMINATED, ActivityState.CANCELLED})

# The full monotone transition relation. Anything outside is a bug, so the
# engine asserts membership on every applied change.
ALLOWED_TRANSITIONS = {
    ActivityState.INITIAL: frozenset({
        ActivityState.READY, ActivityState.ANTICIPABLE, ActivityState.CANCELLED,
    }),
    ActivityState.READY: frozenset({
        ActivityState.EXECUTING, ActivityState.CANCELLED,
    }),
    ActivityState.ANTICIPABLE: frozenset({
        ActivityState.ANTICIPATING, ActivityState.READY, ActivityState.CANCELLED,
    }),
    ActivityState.ANTICIPATING: frozenset({ActivityState.EXECUTING}),
    ActivityState.EXECUTING: frozenset({ActivityState.TERMINATED}),
    ActivityState.TERMINATED: frozenset(),
    ActivityState.CANCELLED: frozenset(),
}


class InstanceStatus(str, Enum):
    RUNNING = "Running"
    COMPLETED = "Completed"


class Provenance(str, Enum):
    PROVISIONAL = "provisional"
    FINAL = "final"
    SUPERSEDED = "superseded"


@dataclass(frozen=True)
class DataPacket:
    packet_seq: int  # per edge, strictly increasing from 1
    edge_index: int  # index into definition.data_edges
    provenance: Provenance
    message: bytes  # encoded wire message
    emitted_at: int  # ms since epoch


@dataclass
class ActivityInstance:
    name: str
    state: ActivityState = ActivityState.INITIAL
    started_at: Optional[int] = None
    terminated_at: Optional[int] = None
    anticipated: bool = False  # true iff it ever entered Anticipating

    def copy(self) -> "ActivityInstance":
        return replace(self)


class EventKind(str, Enum):
    DEFINITION_LOADED = "DefinitionLoaded"
    ACTIVITY_STATE_CHANGED = "ActivityStateChanged"
    CONDITION_EVALUATED = "ConditionEvaluated"
    DATA_EMITTED = "DataEmitted"
    INSTANCE_COMPLETED = "InstanceCompleted"


@dataclass(frozen=True)
class EngineEvent:
    seq: int  # dense and gapless per instance, starting at 1
    instance: str
    at: int  # ms since epoch
    kind: EventKind
    payload: dict

    def to_json_obj(self) -> dict:
        return {
            "seq": self.seq,
            "instance": self.instance,
            "at": self.at,
            "kind": self.kind.value,
            "payload": self.payload,
        }


@dataclass
class ProcessInstance:
    id: str
    definition: "object"  # model.ProcessDefinition
    anticipation_enabled: bool
    activities: "dict[str, ActivityInstance]" = field(default_factory=dict)
    xor_choices: "dict[str, int]" = field(default_factory=dict)  # split name -> control-edge index
    packets: "dict[int, list[DataPacket]]" = field(default_factory=dict)  # data-edge index -> history
    seq: int = 0  # last emitted event seq
    status: InstanceStatus = InstanceStatus.RUNNING
    last_at: int = 0  # clock clamp so event times never go backward

    def clone(self) -> "ProcessInstance":
        return ProcessInstance(
            id=self.id,
            definition=self.definition,
            anticipation_enabled=self.anticipation_enabled,
            activities={n: a.copy() for n, a in self.activities.items()},
            xor_choices=dict(self.xor_choices),
            packets={i: list(ps) for i, ps in self.packets.items()},
            seq=self.seq,
            status=self.status,
            last_at=self.last_at,
        )

    def state_vector(self) -> "tuple[tuple[str, str], ...]":
        return tuple(sorted((n, a.state.value) for n, a in self.activities.items()))

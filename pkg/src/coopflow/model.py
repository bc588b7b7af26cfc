"""Workflow definitions: the static task graph.

A definition document is JSON with top-level keys name, version, activities,
control_edges, data_edges and formats. Parsing checks shape only; semantic
rules live in validate_definition so every problem in a document can be
reported at once.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import codec
from .errors import (
    ConditionTypeError,
    CyclicControlFlowError,
    DefinitionSyntaxError,
    InvalidDescriptorError,
    MalformedDefinitionError,
    UnknownKeyError,
)


class SplitKind(str, Enum):
    AND = "and"
    XOR = "xor"


class ConditionOp(str, Enum):
    EQ = "eq"
    NE = "ne"
    LT = "lt"
    LE = "le"
    GT = "gt"
    GE = "ge"


ORDERING_OPS = {ConditionOp.LT, ConditionOp.LE, ConditionOp.GT, ConditionOp.GE}


def is_number(v: object) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass(frozen=True)
class Condition:
    field: str
    op: ConditionOp
    literal: object  # number or text

    def matches(self, value: object) -> bool:
        """Evaluate against an output value.

        Equality across value classes (number vs text vs bytes) is simply
        false; ordering against a non-numeric value is a hard error because
        silently routing on an undefined comparison would hide data bugs.
        """
        if self.op in ORDERING_OPS:
            if not is_number(value):
                raise ConditionTypeError(
                    f"cannot order non-numeric value {value!r} against field '{self.field}'")
            lit = self.literal
            if self.op is ConditionOp.LT:
                return value < lit
            if self.op is ConditionOp.LE:
                return value <= lit
            if self.op is ConditionOp.GT:
                return value > lit
            return value >= lit
        same_class = (
            (is_number(value) and is_number(self.literal))
            or (isinstance(value, str) and isinstance(self.literal, str))
        )
        equal = same_class and value == self.literal
        return equal if self.op is ConditionOp.EQ else not equal


@dataclass(frozen=True)
class ActivityDef:
    name: str
    split_kind: SplitKind = SplitKind.AND
    description: str = ""
    assignee: Optional[str] = None


@dataclass(frozen=True)
class ControlEdge:
    source: str
    target: str
    condition: Optional[Condition] = None
    is_default: bool = False


@dataclass(frozen=True)
class DataEdge:
    producer: str
    consumer: str
    format: str
    feedback: bool = False


@dataclass(frozen=True)
class ProcessDefinition:
    name: str
    version: int
    activities: tuple[ActivityDef, ...] = ()
    control_edges: tuple[ControlEdge, ...] = ()
    data_edges: tuple[DataEdge, ...] = ()
    formats: tuple[codec.FormatDescriptor, ...] = ()

    def activity(self, name: str) -> Optional[ActivityDef]:
        for a in self.activities:
            if a.name == name:
                return a
        return None

    def format(self, name: str) -> Optional[codec.FormatDescriptor]:
        for f in self.formats:
            if f.name == name:
                return f
        return None


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


# --- parsing ---

def _pairs_hook(pairs: "list[tuple[str, object]]") -> dict:
    obj: dict = {}
    for k, v in pairs:
        if k in obj:
            raise _DuplicateKey(k)
        obj[k] = v
    return obj


class _DuplicateKey(Exception):
    def __init__(self, key: str):
        self.key = key


def _locate_second(document: str, key: str) -> "tuple[int | None, int | None]":
    # Best effort: line/column of the key's second textual occurrence.
    needle = json.dumps(key)
    first = document.find(needle)
    if first < 0:
        return None, None
    second = document.find(needle, first + len(needle))
    if second < 0:
        return None, None
    line = document.count("\n", 0, second) + 1
    column = second - (document.rfind("\n", 0, second) + 1) + 1
    return line, column


_TOP_KEYS = {"name", "version", "activities", "control_edges", "data_edges", "formats"}
_ACTIVITY_KEYS = {"name", "split", "assignee", "description"}
_CONTROL_KEYS = {"from", "to", "condition", "default"}
_CONDITION_KEYS = {"field", "op", "value"}
_DATA_KEYS = {"from", "to", "format", "feedback"}


def _reject_unknown(obj: dict, allowed: "set[str]", where: str) -> None:
    extra = set(obj) - allowed
    if extra:
        raise UnknownKeyError(f"unknown key '{sorted(extra)[0]}' in {where}")


def _require(obj: dict, key: str, where: str) -> object:
    if key not in obj:
        raise MalformedDefinitionError(f"missing key '{key}' in {where}")
    return obj[key]


def _require_str(obj: dict, key: str, where: str) -> str:
    v = _require(obj, key, where)
    if not isinstance(v, str):
        raise MalformedDefinitionError(f"key '{key}' in {where} must be a string")
    return v


def _parse_condition(obj: object, where: str) -> Condition:
    if not isinstance(obj, dict):
        raise MalformedDefinitionError(f"condition in {where} must be an object")
    _reject_unknown(obj, _CONDITION_KEYS, f"condition in {where}")
    fname = _require_str(obj, "field", f"condition in {where}")
    op_s = _require_str(obj, "op", f"condition in {where}")
    try:
        op = ConditionOp(op_s)
    except ValueError:
        raise MalformedDefinitionError(f"unknown condition op {op_s!r} in {where}")
    value = _require(obj, "value", f"condition in {where}")
    if not (is_number(value) or isinstance(value, str)):
        raise MalformedDefinitionError(
            f"condition value in {where} must be a number or string")
    return Condition(fname, op, value)


def parse_definition(document: str) -> ProcessDefinition:
    """Parse a definition document. Raises on malformed shape; structural
    rules (cycles, dangling references, branch defaults) are left to
    validate_definition."""
    try:
        top = json.loads(document, object_pairs_hook=_pairs_hook)
    except _DuplicateKey as dup:
        line, column = _locate_second(document, dup.key)
        raise DefinitionSyntaxError(f"duplicated key '{dup.key}'", line, column)
    except json.JSONDecodeError as exc:
        raise DefinitionSyntaxError(exc.msg, exc.lineno, exc.colno)
    if not isinstance(top, dict):
        raise MalformedDefinitionError("definition document must be a JSON object")
    _reject_unknown(top, _TOP_KEYS, "definition")
    name = _require_str(top, "name", "definition")
    version = _require(top, "version", "definition")
    if not isinstance(version, int) or isinstance(version, bool):
        raise MalformedDefinitionError("'version' must be an integer")

    raw_acts = _require(top, "activities", "definition")
    if not isinstance(raw_acts, list):
        raise MalformedDefinitionError("'activities' must be an array")
    activities = []
    for entry in raw_acts:
        if not isinstance(entry, dict):
            raise MalformedDefinitionError("each activity must be an object")
        _reject_unknown(entry, _ACTIVITY_KEYS, "activity")
        aname = _require_str(entry, "name", "activity")
        split_s = _require_str(entry, "split", f"activity '{aname}'")
        try:
            split = SplitKind(split_s)
        except ValueError:
            raise MalformedDefinitionError(
                f"activity '{aname}': split must be 'and' or 'xor', not {split_s!r}")
        assignee = entry.get("assignee")
        if assignee is not None and not isinstance(assignee, str):
            raise MalformedDefinitionError(f"activity '{aname}': assignee must be a string")
        description = entry.get("description", "")
        if not isinstance(description, str):
            raise MalformedDefinitionError(f"activity '{aname}': description must be a string")
        activities.append(ActivityDef(aname, split, description, assignee))

    raw_ctrl = _require(top, "control_edges", "definition")
    if not isinstance(raw_ctrl, list):
        raise MalformedDefinitionError("'control_edges' must be an array")
    control_edges = []
    for entry in raw_ctrl:
        if not isinstance(entry, dict):
            raise MalformedDefinitionError("each control edge must be an object")
        _reject_unknown(entry, _CONTROL_KEYS, "control edge")
        src = _require_str(entry, "from", "control edge")
        dst = _require_str(entry, "to", "control edge")
        where = f"control edge {src}->{dst}"
        is_default = entry.get("default", False)
        if not isinstance(is_default, bool):
            raise MalformedDefinitionError(f"'default' in {where} must be a boolean")
        condition = None
        if "condition" in entry:
            condition = _parse_condition(entry["condition"], where)
        control_edges.append(ControlEdge(src, dst, condition, is_default))

    raw_data = _require(top, "data_edges", "definition")
    if not isinstance(raw_data, list):
        raise MalformedDefinitionError("'data_edges' must be an array")
    data_edges = []
    for entry in raw_data:
        if not isinstance(entry, dict):
            raise MalformedDefinitionError("each data edge must be an object")
        _reject_unknown(entry, _DATA_KEYS, "data edge")
        src = _require_str(entry, "from", "data edge")
        dst = _require_str(entry, "to", "data edge")
        fmt = _require_str(entry, "format", f"data edge {src}->{dst}")
        feedback = entry.get("feedback", False)
        if not isinstance(feedback, bool):
            raise MalformedDefinitionError(
                f"'feedback' in data edge {src}->{dst} must be a boolean")
        data_edges.append(DataEdge(src, dst, fmt, feedback))

    raw_formats = _require(top, "formats", "definition")
    if not isinstance(raw_formats, list):
        raise MalformedDefinitionError("'formats' must be an array")
    formats = [codec.descriptor_from_json(entry) for entry in raw_formats]

    return ProcessDefinition(
        name=name,
        version=version,
        activities=tuple(activities),
        control_edges=tuple(control_edges),
        data_edges=tuple(data_edges),
        formats=tuple(formats),
    )


def definition_to_document(defn: ProcessDefinition) -> dict:
    doc: dict = {"name": defn.name, "version": defn.version}
    acts = []
    for a in defn.activities:
        entry: dict = {"name": a.name, "split": a.split_kind.value}
        if a.description:
            entry["description"] = a.description
        if a.assignee is not None:
            entry["assignee"] = a.assignee
        acts.append(entry)
    doc["activities"] = acts
    ctrl = []
    for e in defn.control_edges:
        entry = {"from": e.source, "to": e.target}
        if e.condition is not None:
            entry["condition"] = {
                "field": e.condition.field,
                "op": e.condition.op.value,
                "value": e.condition.literal,
            }
        if e.is_default:
            entry["default"] = True
        ctrl.append(entry)
    doc["control_edges"] = ctrl
    data = []
    for d in defn.data_edges:
        entry = {"from": d.producer, "to": d.consumer, "format": d.format}
        if d.feedback:
            entry["feedback"] = True
        data.append(entry)
    doc["data_edges"] = data
    doc["formats"] = [codec.descriptor_to_json(f) for f in defn.formats]
    return doc


def serialize_definition(defn: ProcessDefinition) -> str:
    return json.dumps(definition_to_document(defn), indent=2) + "\n"


# --- validation ---

def _control_adjacency(defn: ProcessDefinition) -> "dict[str, list[str]]":
    adj: dict[str, list[str]] = {a.name: [] for a in defn.activities}
    for e in defn.control_edges:
        if e.source in adj and e.target in adj:
            adj[e.source].append(e.target)
    return adj


def _reachable_from(adj: "dict[str, list[str]]", start: str) -> "set[str]":
    seen: set[str] = set()
    stack = list(adj.get(start, ()))
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        stack.extend(adj.get(node, ()))
    return seen


def _has_cycle(adj: "dict[str, list[str]]") -> bool:
    indeg = {n: 0 for n in adj}
    for outs in adj.values():
        for t in outs:
            indeg[t] += 1
    queue = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        node = queue.pop()
        seen += 1
        for t in adj[node]:
            indeg[t] -= 1
            if indeg[t] == 0:
                queue.append(t)
    return seen != len(adj)


def validate_definition(defn: ProcessDefinition) -> ValidationReport:
    """Collect every rule violation; an empty report means executable."""
    out: list[Violation] = []

    def flag(code: str, message: str) -> None:
        out.append(Violation(code, message))

    if not defn.name:
        flag("BlankName", "definition name must be non-empty")
    if defn.version < 0:
        flag("NegativeVersion", f"version must be non-negative, got {defn.version}")
    if not defn.activities:
        flag("EmptyActivityList", "definition declares no activities")

    names: set[str] = set()
    for a in defn.activities:
        if not a.name:
            flag("BlankName", "activity name must be non-empty")
        if a.name in names:
            flag("DuplicateActivityName", f"activity '{a.name}' declared twice")
        names.add(a.name)

    fmt_names: set[str] = set()
    for f in defn.formats:
        if f.name in fmt_names:
            flag("DuplicateFormatName", f"format '{f.name}' declared twice")
        fmt_names.add(f.name)
        try:
            codec.validate_descriptor(f)
        except InvalidDescriptorError as exc:
            flag("InvalidFormat", f"format '{f.name}': {exc.message}")

    for e in defn.control_edges:
        if e.source not in names:
            flag("UnknownEndpoint", f"control edge references unknown activity '{e.source}'")
        if e.target not in names:
            flag("UnknownEndpoint", f"control edge references unknown activity '{e.target}'")

    for d in defn.data_edges:
        if d.producer not in names:
            flag("UnknownEndpoint", f"data edge references unknown activity '{d.producer}'")
        if d.consumer not in names:
            flag("UnknownEndpoint", f"data edge references unknown activity '{d.consumer}'")
        if d.format not in fmt_names:
            flag("UnknownFormat", f"data edge {d.producer}->{d.consumer} references undeclared format '{d.format}'")

    adj = _control_adjacency(defn)
    cyclic = _has_cycle(adj)
    if cyclic:
        flag("CyclicControlFlow", "control-edge graph contains a cycle")

    outgoing: dict[str, list[ControlEdge]] = {n: [] for n in names}
    for e in defn.control_edges:
        if e.source in outgoing:
            outgoing[e.source].append(e)

    for a in defn.activities:
        edges = outgoing.get(a.name, [])
        if a.split_kind is SplitKind.XOR:
            if len(edges) < 2:
                flag("XorFanoutTooSmall",
                     f"activity '{a.name}' is an xor split but has {len(edges)} outgoing control edges")
            defaults = [e for e in edges if e.is_default]
            if not defaults:
                flag("MissingDefaultBranch", f"xor split '{a.name}' has no default branch")
            elif len(defaults) > 1:
                flag("MultipleDefaultBranches",
                     f"xor split '{a.name}' has {len(defaults)} default branches")
            for e in edges:
                if e.is_default and e.condition is not None:
                    flag("DefaultBranchWithCondition",
                         f"default branch {e.source}->{e.target} must not carry a condition")
                if not e.is_default and e.condition is None:
                    flag("MissingBranchCondition",
                         f"branch {e.source}->{e.target} of xor split '{a.name}' needs a condition")
        else:
            for e in edges:
                if e.condition is not None:
                    flag("ConditionOnNonXorEdge",
                         f"edge {e.source}->{e.target} carries a condition but '{a.name}' is not an xor split")
                if e.is_default:
                    flag("DefaultOnNonXorEdge",
                         f"edge {e.source}->{e.target} is marked default but '{a.name}' is not an xor split")

    for e in defn.control_edges:
        if e.condition is not None and e.condition.op in ORDERING_OPS:
            if not is_number(e.condition.literal):
                flag("NonNumericOrderingLiteral",
                     f"edge {e.source}->{e.target}: op '{e.condition.op.value}' requires a numeric value")

    if not cyclic:
        closure = {n: _reachable_from(adj, n) for n in adj}
        for d in defn.data_edges:
            if d.producer not in names or d.consumer not in names:
                continue
            if d.feedback:
                if d.producer not in closure[d.consumer]:
                    flag("FeedbackEdgeNotBackward",
                         f"feedback edge {d.producer}->{d.consumer} must point against control flow")
            else:
                if d.consumer not in closure[d.producer]:
                    flag("DataEdgeNotForward",
                         f"data edge {d.producer}->{d.consumer} must follow control flow")

    return ValidationReport(tuple(out))


def canonical_order(defn: ProcessDefinition) -> "list[str]":
    """Deterministic topological order of activity names, lexicographic
    tie-break. Cascades and event transcripts rely on this order."""
    adj = _control_adjacency(defn)
    indeg = {n: 0 for n in adj}
    for outs in adj.values():
        for t in outs:
            indeg[t] += 1
    heap = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        node = heapq.heappop(heap)
        order.append(node)
        for t in adj[node]:
            indeg[t] -= 1
            if indeg[t] == 0:
                heapq.heappush(heap, t)
    if len(order) != len(adj):
        raise CyclicControlFlowError("control-edge graph contains a cycle")
    return order

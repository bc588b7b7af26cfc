"""Builders and state-space exploration shared by engine test modules."""

from __future__ import annotations

from typing import Callable

from coopflow import engine
from coopflow.model import (
    ActivityDef,
    Condition,
    ConditionOp,
    ControlEdge,
    ProcessDefinition,
    SplitKind,
)
from coopflow.runtime import ActivityState, EventKind, ProcessInstance

Edge = tuple[int, int]
Action = tuple[str, int, "dict | None"]

# Transition relation restated independently of the engine's table.
ALLOWED_CHANGES = {
    ("Initial", "Ready"),
    ("Initial", "Anticipable"),
    ("Initial", "Cancelled"),
    ("Ready", "Executing"),
    ("Ready", "Cancelled"),
    ("Anticipable", "Anticipating"),
    ("Anticipable", "Ready"),
    ("Anticipable", "Cancelled"),
    ("Anticipating", "Executing"),
    ("Executing", "Terminated"),
}

# Progress ranks: every allowed change is non-decreasing and every user
# action strictly raises the acted activity, so the vector sum strictly
# increases per action and no trace can ever revisit a state.
RANK = {
    "Initial": 0,
    "Ready": 1,
    "Anticipable": 1,
    "Anticipating": 2,
    "Executing": 3,
    "Terminated": 4,
    "Cancelled": 4,
}


def defn_from_edges(n: int, edges: tuple[Edge, ...],
                    xor_source: "int | None" = None) -> ProcessDefinition:
    """DAG over activities a0..a{n-1}; one node may become a 2-way XOR split.

    The XOR node's first outgoing edge tests x == 1, the second is the
    default, so terminating it with {"x": 1} or {"x": 0} picks the branch.
    """
    acts = tuple(
        ActivityDef(f"a{i}", SplitKind.XOR if i == xor_source else SplitKind.AND)
        for i in range(n))
    ces = []
    first_branch = True
    for a, b in sorted(edges):
        if a == xor_source:
            if first_branch:
                ces.append(ControlEdge(f"a{a}", f"a{b}",
                                       condition=Condition("x", ConditionOp.EQ, 1)))
                first_branch = False
            else:
                ces.append(ControlEdge(f"a{a}", f"a{b}", is_default=True))
        else:
            ces.append(ControlEdge(f"a{a}", f"a{b}"))
    return ProcessDefinition("g", 1, acts, tuple(ces), (), ())


def vec(inst: ProcessInstance, n: int) -> tuple[str, ...]:
    return tuple(inst.activities[f"a{i}"].state.value for i in range(n))


def choice_key(inst: ProcessInstance) -> tuple:
    return tuple(sorted(inst.xor_choices.items()))


def legal_actions(inst: ProcessInstance, n: int,
                  xor_source: "int | None" = None,
                  include_cancel: bool = False) -> list[Action]:
    acts: list[Action] = []
    for i in range(n):
        s = inst.activities[f"a{i}"].state
        if s in (ActivityState.READY, ActivityState.ANTICIPABLE):
            acts.append(("start", i, None))
        elif s is ActivityState.EXECUTING:
            if i == xor_source:
                acts.append(("terminate", i, {"x": 1}))
                acts.append(("terminate", i, {"x": 0}))
            else:
                acts.append(("terminate", i, {}))
        if include_cancel and s in (ActivityState.INITIAL, ActivityState.READY,
                                    ActivityState.ANTICIPABLE):
            acts.append(("cancel", i, None))
    return acts


def apply_action(inst: ProcessInstance, action: Action):
    kind, i, arg = action
    work = inst.clone()
    name = f"a{i}"
    if kind == "start":
        events = engine.start_activity(work, name, None, 0)
    elif kind == "terminate":
        events = engine.terminate_activity(work, name, arg, 0)
    else:
        events = engine.cancel_activity(work, name, 0)
    return work, events


def dead_incoming(n: int, edges: tuple[Edge, ...], states: tuple[str, ...],
                  chosen_target: "dict[int, int]") -> set[Edge]:
    """Dead edges by the book: cancelled source, or unchosen branch of a
    decided XOR split (chosen_target maps split node to the picked target)."""
    dead = set()
    for a, b in edges:
        if states[a] == "Cancelled":
            dead.add((a, b))
        elif a in chosen_target and chosen_target[a] != b:
            dead.add((a, b))
    return dead


def explore(defn: ProcessDefinition, n: int, anticipation: bool,
            xor_source: "int | None" = None, include_cancel: bool = False,
            on_transition: "Callable | None" = None) -> set[tuple[str, ...]]:
    """BFS over settled states; returns the set of reachable state vectors.

    on_transition(prev, action, nxt, events) runs for every explored edge of
    the state graph; raising from it fails the calling test.
    """
    inst0, _ = engine.create_instance(defn, "x", anticipation, 0)
    key0 = (vec(inst0, n), choice_key(inst0))
    seen = {key0}
    vectors = {key0[0]}
    frontier = [inst0]
    while frontier:
        inst = frontier.pop()
        for action in legal_actions(inst, n, xor_source, include_cancel):
            nxt, events = apply_action(inst, action)
            if on_transition is not None:
                on_transition(inst, action, nxt, events)
            key = (vec(nxt, n), choice_key(nxt))
            if key not in seen:
                seen.add(key)
                vectors.add(key[0])
                frontier.append(nxt)
    return vectors


def checked_transition(n: int, edges: tuple[Edge, ...]):
    """Invariant-checking callback for explore(): transition legality, strict
    progress, dense event numbering, terminate preconditions, dead-path
    cancellation, stable XOR choices, and the completion rule."""
    name_to_idx = {f"a{i}": i for i in range(n)}

    def check(prev: ProcessInstance, action: Action, nxt: ProcessInstance,
              events) -> None:
        kind, i, _ = action
        pv, nv = vec(prev, n), vec(nxt, n)

        if kind == "terminate":
            chosen = {name_to_idx[s]: name_to_idx[
                prev.definition.control_edges[e].target]
                for s, e in prev.xor_choices.items()}
            dead = dead_incoming(n, edges, pv, chosen)
            for a, b in edges:
                if b == i and (a, b) not in dead:
                    assert pv[a] == "Terminated", (
                        f"terminate a{i} with live predecessor a{a} in {pv[a]}")

        for ev in events:
            if ev.kind is EventKind.ACTIVITY_STATE_CHANGED:
                pair = (ev.payload["from"], ev.payload["to"])
                assert pair in ALLOWED_CHANGES, f"illegal change {pair}"
        assert [ev.seq for ev in events] == list(
            range(prev.seq + 1, prev.seq + 1 + len(events)))

        assert sum(RANK[s] for s in nv) > sum(RANK[s] for s in pv), (
            f"no progress from {pv} via {action}")

        for split, edge_idx in prev.xor_choices.items():
            assert nxt.xor_choices.get(split) == edge_idx, "choice changed"

        chosen_after = {name_to_idx[s]: name_to_idx[
            nxt.definition.control_edges[e].target]
            for s, e in nxt.xor_choices.items()}
        dead_after = dead_incoming(n, edges, nv, chosen_after)
        for j in {b for _, b in edges}:
            ins = [(a, b) for a, b in edges if b == j]
            if ins and all(e in dead_after for e in ins):
                assert nv[j] == "Cancelled", (
                    f"a{j} has only dead inputs but is {nv[j]}")

        done = all(s in ("Terminated", "Cancelled") for s in nv)
        assert (nxt.status.value == "Completed") == done

    return check

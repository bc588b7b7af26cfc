"""Dataflow routing between activities.

Packets store encoded wire bytes, never decoded values; the codec is the
single decode authority. Per edge the newest Final packet wins, otherwise
the newest Provisional one, and finalizing supersedes all provisional
history on that edge.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass, replace
from typing import Optional

from . import codec
from .errors import (
    AmbiguousDataEdgeError,
    FeedbackTargetInactiveError,
    FormatMismatchError,
    NonConformingRecordError,
    UnknownActivityError,
    UnknownDataEdgeError,
)
from .model import DataEdge, ProcessDefinition
from .runtime import (
    ActivityState,
    DataPacket,
    ProcessInstance,
    Provenance,
)

_ACTIVE_STATES = (ActivityState.EXECUTING, ActivityState.ANTICIPATING)


@dataclass(frozen=True)
class EdgeInput:
    """Selected packet (plus decode) for one incoming data edge."""

    edge_index: int
    edge: DataEdge
    packet: Optional[DataPacket]
    record: "Optional[codec.Record]"
    report: Optional[codec.DecodeReport]
    stale: bool  # true iff the served packet is provisional
    history_len: int


@dataclass(frozen=True)
class InputView:
    consumer: str
    edges: tuple[EdgeInput, ...]

    @property
    def stale(self) -> bool:
        return any(e.stale for e in self.edges)


def resolve_data_edge(defn: ProcessDefinition, producer: str, to: str, feedback: bool) -> int:
    """Map an emit request (producer, target, feedback flag) to the edge index."""
    matches = [
        i for i, e in enumerate(defn.data_edges)
        if e.producer == producer and e.consumer == to and e.feedback == feedback
    ]
    if not matches:
        raise UnknownDataEdgeError(
            f"no {'feedback ' if feedback else ''}data edge {producer}->{to}")
    if len(matches) > 1:
        raise AmbiguousDataEdgeError(
            f"{len(matches)} data edges match {producer}->{to}; definition must disambiguate")
    return matches[0]


def feedback_target_violation(inst: ProcessInstance, edge: DataEdge) -> Optional[str]:
    """Feedback to finished work is meaningless: target must still be active."""
    target = inst.activities[edge.consumer]
    if target.state not in _ACTIVE_STATES:
        return (f"feedback target '{edge.consumer}' is {target.state.value}, "
                "not Executing or Anticipating")
    return None


def encode_for_edge(defn: ProcessDefinition, edge: DataEdge, values: "dict[str, object]",
                    allow_extra: bool = False) -> bytes:
    desc = defn.format(edge.format)
    if desc is None:
        raise FormatMismatchError(f"edge format '{edge.format}' is not declared")
    try:
        rec = codec.build_record(desc, values, allow_extra=allow_extra)
        return codec.encode(desc, rec)
    except NonConformingRecordError as exc:
        raise FormatMismatchError(exc.message)


def store_packet(inst: ProcessInstance, edge_index: int, provenance: Provenance,
                 message: bytes, at: int) -> DataPacket:
    """Append a packet; a Final one supersedes every provisional predecessor.
    Used identically by the live path and by event replay."""
    history = inst.packets.setdefault(edge_index, [])
    if provenance is Provenance.FINAL:
        for i, p in enumerate(history):
            if p.provenance is Provenance.PROVISIONAL:
                history[i] = replace(p, provenance=Provenance.SUPERSEDED)
    pkt = DataPacket(
        packet_seq=len(history) + 1,
        edge_index=edge_index,
        provenance=provenance,
        message=message,
        emitted_at=at,
    )
    history.append(pkt)
    return pkt


def emit_payload(defn: ProcessDefinition, edge_index: int, pkt: DataPacket) -> dict:
    edge = defn.data_edges[edge_index]
    return {
        "edge_index": edge_index,
        "from": edge.producer,
        "to": edge.consumer,
        "format": edge.format,
        "feedback": edge.feedback,
        "provenance": pkt.provenance.value,
        "packet_seq": pkt.packet_seq,
        "message": base64.b64encode(pkt.message).decode("ascii"),
    }


def prepare_final_outputs(defn: ProcessDefinition, producer: str,
                          values: "dict[str, object]") -> "list[tuple[int, bytes]]":
    """Encode the termination output against every outgoing non-feedback
    edge. Pure: raises FormatMismatch without touching instance state, so
    terminate stays atomic."""
    prepared: list[tuple[int, bytes]] = []
    for i, edge in enumerate(defn.data_edges):
        if edge.producer != producer or edge.feedback:
            continue
        prepared.append((i, encode_for_edge(defn, edge, values, allow_extra=True)))
    return prepared


def commit_final_outputs(inst: ProcessInstance, prepared: "list[tuple[int, bytes]]",
                         at: int) -> "list[tuple[int, DataPacket]]":
    out = []
    for edge_index, message in prepared:
        out.append((edge_index, store_packet(inst, edge_index, Provenance.FINAL, message, at)))
    return out


def emit_provisional(inst: ProcessInstance, edge_index: int, values: "dict[str, object]",
                     at: int) -> DataPacket:
    """Store one provisional packet on an edge. Producer-state and feedback
    checks are the engine's job; this does format checking and storage."""
    defn: ProcessDefinition = inst.definition
    edge = defn.data_edges[edge_index]
    message = encode_for_edge(defn, edge, values, allow_extra=False)
    if edge.feedback:
        violation = feedback_target_violation(inst, edge)
        if violation:
            raise FeedbackTargetInactiveError(violation)
    return store_packet(inst, edge_index, Provenance.PROVISIONAL, message, at)


def select_packet(history: "list[DataPacket]") -> Optional[DataPacket]:
    """Final if present, else the newest Provisional; Superseded never served."""
    final = [p for p in history if p.provenance is Provenance.FINAL]
    if final:
        return final[-1]
    provisional = [p for p in history if p.provenance is Provenance.PROVISIONAL]
    return provisional[-1] if provisional else None


def fetch_inputs(inst: ProcessInstance, consumer: str) -> InputView:
    defn: ProcessDefinition = inst.definition
    if consumer not in inst.activities:
        raise UnknownActivityError(f"no activity named '{consumer}'")
    edges: list[EdgeInput] = []
    for i, edge in enumerate(defn.data_edges):
        if edge.consumer != consumer:
            continue
        history = inst.packets.get(i, [])
        pkt = select_packet(history)
        record = report = None
        stale = False
        if pkt is not None:
            desc = defn.format(edge.format)
            record, report = codec.decode_as(pkt.message, desc)
            stale = pkt.provenance is Provenance.PROVISIONAL
        edges.append(EdgeInput(
            edge_index=i,
            edge=edge,
            packet=pkt,
            record=record,
            report=report,
            stale=stale,
            history_len=len(history),
        ))
    return InputView(consumer=consumer, edges=tuple(edges))


def has_stale_input(inst: ProcessInstance, consumer: str) -> bool:
    defn: ProcessDefinition = inst.definition
    for i, edge in enumerate(defn.data_edges):
        if edge.consumer != consumer:
            continue
        pkt = select_packet(inst.packets.get(i, []))
        if pkt is not None and pkt.provenance is Provenance.PROVISIONAL:
            return True
    return False


def input_view_jsonable(defn: ProcessDefinition, view: InputView) -> dict:
    edges = []
    for e in view.edges:
        entry: dict = {
            "edge_index": e.edge_index,
            "from": e.edge.producer,
            "to": e.edge.consumer,
            "format": e.edge.format,
            "feedback": e.edge.feedback,
            "stale": e.stale,
            "history_len": e.history_len,
        }
        if e.packet is None:
            entry["packet"] = None
        else:
            desc = defn.format(e.edge.format)
            entry["packet"] = {
                "packet_seq": e.packet.packet_seq,
                "provenance": e.packet.provenance.value,
                "emitted_at": e.packet.emitted_at,
            }
            entry["record"] = codec.record_to_jsonable(desc, e.record)
            entry["report"] = {
                "dropped": list(e.report.dropped),
                "defaulted": list(e.report.defaulted),
                "converted": [list(c) for c in e.report.converted],
            }
        edges.append(entry)
    return {"consumer": view.consumer, "stale": view.stale, "edges": edges}

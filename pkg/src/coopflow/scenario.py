"""Scripted runs: execute an ordered list of actions against a fresh
in-memory engine and check expectations along the way, optionally comparing
the resulting event log against an expected transcript (timestamps and
instance ids excluded; everything else must match exactly).

Scenario file shape:

    {
      "definition_file": "sibling.wf.json",   # or "definition": {inline doc}
      "instance_id": "demo",                  # optional
      "anticipation": true,                   # optional, default true
      "steps": [...],
      "expected_events": [{"seq": 1, "kind": "...", "payload": {...}}, ...]
    }

Action steps: {"do": "start"|"terminate"|"cancel"|"emit", ...} mirroring the
HTTP API. Expectation steps: expect_state, expect_status, expect_input,
expect_worklist, and expect_error (which wraps an action that must fail
with the given code and leave no trace in the event log).
"""
from __future__ import annotations

import itertools
import json
from pathlib import Path
from typing import Optional

from .errors import CoopflowError, ScenarioMismatchError
from .service import EngineService


def _virtual_clock():
    counter = itertools.count(start=1_000, step=1_000)
    return lambda: next(counter)


def _load_scenario(path: "Path | str") -> dict:
    path = Path(path)
    scenario = json.loads(path.read_text("utf-8"))
    if not isinstance(scenario, dict):
        raise ValueError("scenario file must contain a JSON object")
    if "definition_file" in scenario:
        doc_path = path.parent / scenario["definition_file"]
        scenario = dict(scenario)
        scenario["definition"] = json.loads(doc_path.read_text("utf-8"))
        del scenario["definition_file"]
    return scenario


def _event_fingerprint(obj: dict) -> dict:
    return {"seq": obj["seq"], "kind": obj["kind"], "payload": obj["payload"]}


class _Run:
    def __init__(self, scenario: dict):
        if "definition" not in scenario:
            raise ValueError("scenario needs 'definition' or 'definition_file'")
        self.scenario = scenario
        self.service = EngineService(data_dir=None, clock=_virtual_clock())
        self.transcript: list[dict] = []
        loaded = self.service.load_definition(json.dumps(scenario["definition"]))
        created = self.service.create_instance(
            loaded["name"],
            instance_id=scenario.get("instance_id"),
            anticipation=scenario.get("anticipation", True),
        )
        self.instance_id = created["id"]

    def fail(self, step_no: int, message: str) -> "ScenarioMismatchError":
        return ScenarioMismatchError(f"step {step_no}: {message}", step=step_no,
                                     transcript=self.transcript)

    def _do_action(self, step: dict) -> "list":
        do = step["do"]
        if do == "start":
            return self.service.start(self.instance_id, step["activity"], step.get("actor"))
        if do == "terminate":
            return self.service.terminate(self.instance_id, step["activity"],
                                          step.get("output", {}))
        if do == "cancel":
            return self.service.cancel(self.instance_id, step["activity"])
        if do == "emit":
            return self.service.emit(self.instance_id, step["activity"], step["to"],
                                     bool(step.get("feedback", False)), step["record"])
        raise ValueError(f"unknown scenario action {do!r}")

    def _check_expectation(self, step_no: int, step: dict) -> None:
        do = step["do"]
        if do == "expect_state":
            status = self.service.instance_status(self.instance_id)
            states = {a["name"]: a["state"] for a in status["activities"]}
            name = step["activity"]
            if name not in states:
                raise self.fail(step_no, f"no activity named '{name}'")
            if states[name] != step["state"]:
                raise self.fail(step_no,
                                f"expected {name} to be {step['state']}, found {states[name]}")
        elif do == "expect_status":
            status = self.service.instance_status(self.instance_id)
            if status["status"] != step["status"]:
                raise self.fail(step_no,
                                f"expected status {step['status']}, found {status['status']}")
        elif do == "expect_input":
            view = self.service.inputs(self.instance_id, step["activity"])
            edges = view["edges"]
            if "from" in step:
                edges = [e for e in edges if e["from"] == step["from"]
                         and e["feedback"] == bool(step.get("feedback", False))]
            if not edges:
                raise self.fail(step_no, f"no matching input edge on '{step['activity']}'")
            edge = edges[0]
            if "stale" in step and edge["stale"] != step["stale"]:
                raise self.fail(step_no, f"expected stale={step['stale']}, found {edge['stale']}")
            pkt = edge.get("packet")
            if "provenance" in step:
                if pkt is None or pkt["provenance"] != step["provenance"]:
                    found = pkt and pkt["provenance"]
                    raise self.fail(step_no,
                                    f"expected provenance {step['provenance']}, found {found}")
            if "packet_seq" in step:
                if pkt is None or pkt["packet_seq"] != step["packet_seq"]:
                    found = pkt and pkt["packet_seq"]
                    raise self.fail(step_no,
                                    f"expected packet_seq {step['packet_seq']}, found {found}")
            if "record" in step:
                if edge.get("record") != step["record"]:
                    raise self.fail(step_no,
                                    f"expected record {step['record']}, found {edge.get('record')}")
        elif do == "expect_worklist":
            got = self.service.worklist(self.instance_id, step.get("actor"))
            for bucket in ("executing", "anticipating", "ready", "anticipable"):
                if bucket not in step:
                    continue
                names = [entry["name"] for entry in got[bucket]]
                if names != step[bucket]:
                    raise self.fail(step_no,
                                    f"expected {bucket}={step[bucket]}, found {names}")
        elif do == "expect_error":
            action = step["action"]
            seq_before = self.service.instance_status(self.instance_id)["seq"]
            try:
                self._do_action(action)
            except CoopflowError as exc:
                if exc.code != step["code"]:
                    raise self.fail(step_no,
                                    f"expected error {step['code']}, got {exc.code}")
            else:
                raise self.fail(step_no,
                                f"expected error {step['code']}, but '{action['do']}' succeeded")
            seq_after = self.service.instance_status(self.instance_id)["seq"]
            if seq_after != seq_before:
                raise self.fail(step_no, "failed action must not emit events")
        else:
            raise ValueError(f"unknown scenario step {do!r}")

    def run(self) -> dict:
        steps = self.scenario.get("steps", [])
        if not isinstance(steps, list):
            raise ValueError("'steps' must be an array")
        for step_no, step in enumerate(steps, start=1):
            if not isinstance(step, dict) or "do" not in step:
                raise ValueError(f"step {step_no} must be an object with a 'do' key")
            do = step["do"]
            entry = {"step": step_no, "do": do, "ok": True}
            try:
                if do in ("start", "terminate", "cancel", "emit"):
                    events = self._do_action(step)
                    entry["events"] = len(events)
                else:
                    self._check_expectation(step_no, step)
            except ScenarioMismatchError:
                entry["ok"] = False
                self.transcript.append(entry)
                raise
            except CoopflowError as exc:
                entry["ok"] = False
                entry["error"] = exc.code
                self.transcript.append(entry)
                raise self.fail(step_no, f"'{do}' failed with {exc.code}: {exc.message}")
            self.transcript.append(entry)
        actual = [ev.to_json_obj() for ev in
                  self.service.events_snapshot(self.instance_id, 0)]
        result = {
            "instance": self.instance_id,
            "passed": True,
            "steps": self.transcript,
            "events": actual,
        }
        expected = self.scenario.get("expected_events")
        if expected is not None:
            got = [_event_fingerprint(o) for o in actual]
            want = [_event_fingerprint(o) for o in expected]
            for i, (g, w) in enumerate(zip(got, want)):
                if g != w:
                    raise ScenarioMismatchError(
                        f"event {i + 1} diverges:\n  expected {json.dumps(w, sort_keys=True)}\n"
                        f"  actual   {json.dumps(g, sort_keys=True)}",
                        transcript=self.transcript)
            if len(got) != len(want):
                raise ScenarioMismatchError(
                    f"event count diverges: expected {len(want)}, got {len(got)}",
                    transcript=self.transcript)
        return result


def run_script(path: "Path | str") -> dict:
    """Execute a scenario file against a fresh engine. Returns the passing
    transcript or raises ScenarioMismatch at the first divergence."""
    return run_scenario(_load_scenario(path))


def run_scenario(scenario: dict) -> dict:
    return _Run(scenario).run()

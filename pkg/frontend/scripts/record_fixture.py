#!/usr/bin/env python3
"""Regenerate fixtures/digitalization.json from the engine.

Drives the packaged walkthrough scenario's actions through an in-process
EngineService and records, after instance creation and after every action,
the events it returned plus the worklist and status responses a client
would see at that moment. The parity tests replay the events through the
browser view model and diff its panels against these snapshots.

Run from anywhere: python3 scripts/record_fixture.py
"""
import itertools
import json
from pathlib import Path

import coopflow
from coopflow.service import EngineService

HERE = Path(__file__).resolve().parent
OUT = HERE.parent / "fixtures" / "digitalization.json"
DATA = Path(coopflow.__file__).resolve().parent / "data"


def main() -> None:
    scenario = json.loads((DATA / "digitalization.scenario.json").read_text("utf-8"))
    definition_doc = (DATA / scenario["definition_file"]).read_text("utf-8")

    # Virtual clock so the fixture is stable across runs.
    ticks = itertools.count(1000, 1000)
    service = EngineService(clock=lambda: next(ticks))

    loaded = service.load_definition(definition_doc)
    created = service.create_instance(
        loaded["name"],
        scenario.get("instance_id"),
        bool(scenario.get("anticipation", True)),
    )
    iid = created["id"]

    snapshots: list[dict] = []

    def snap(action: dict, events) -> None:
        snapshots.append({
            "action": action,
            "events": [ev.to_json_obj() for ev in events],
            "worklist": service.worklist(iid),
            "status": service.instance_status(iid),
        })

    snap({"do": "create"}, service.events_snapshot(iid))

    for step in scenario["steps"]:
        do = step.get("do")
        if do == "start":
            events = service.start(iid, step["activity"], step.get("actor"))
        elif do == "terminate":
            events = service.terminate(iid, step["activity"], step.get("output", {}))
        elif do == "cancel":
            events = service.cancel(iid, step["activity"])
        elif do == "emit":
            events = service.emit(
                iid, step["activity"], step["to"],
                bool(step.get("feedback", False)), step["record"],
            )
        else:
            # Assertion steps don't touch the log; failed actions leave no trace.
            continue
        snap(dict(step), events)

    fixture = {
        "definition": json.loads(definition_doc),
        "instance": iid,
        "steps": snapshots,
        "final_status": service.instance_status(iid),
        "final_events": [ev.to_json_obj() for ev in service.events_snapshot(iid)],
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixture, indent=2) + "\n", "utf-8")
    print(f"wrote {OUT.relative_to(HERE.parent)}: "
          f"{len(snapshots)} snapshots, {len(fixture['final_events'])} events")


if __name__ == "__main__":
    main()

"""Scenario runner: the shipped walkthrough plus mismatch reporting."""

import json
from pathlib import Path

import pytest

import coopflow
from coopflow.errors import ScenarioMismatchError
from coopflow.scenario import run_scenario, run_script

DATA = Path(coopflow.__file__).parent / "data"
SCENARIO = DATA / "digitalization.scenario.json"


def load_scenario() -> dict:
    src = json.loads(SCENARIO.read_text("utf-8"))
    src["definition"] = json.loads(
        (DATA / src.pop("definition_file")).read_text("utf-8"))
    return src


class TestShippedScenario:
    def test_passes_end_to_end(self):
        result = run_script(SCENARIO)
        assert result["passed"] is True
        assert result["instance"] == "digitalization-demo"
        assert len(result["steps"]) == 26
        assert all(s["ok"] for s in result["steps"])

    def test_transcript_matches_modulo_timestamps(self):
        src = load_scenario()
        result = run_scenario(src)
        got = [{"seq": e["seq"], "kind": e["kind"], "payload": e["payload"]}
               for e in result["events"]]
        want = [{"seq": e["seq"], "kind": e["kind"], "payload": e["payload"]}
                for e in src["expected_events"]]
        assert got == want
        assert len(want) == 22

    def test_two_runs_are_identical(self):
        src = load_scenario()
        assert run_scenario(src)["events"] == run_scenario(src)["events"]

    def test_virtual_clock_is_monotone(self):
        ats = [e["at"] for e in run_script(SCENARIO)["events"]]
        assert ats == sorted(ats) and len(set(ats)) > 1


class TestMismatchReporting:
    def test_wrong_state_expectation(self):
        src = load_scenario()
        step_no = next(i for i, s in enumerate(src["steps"], start=1)
                       if s["do"] == "expect_state"
                       and s["activity"] == "CAD")
        src["steps"][step_no - 1]["state"] = "Ready"
        with pytest.raises(ScenarioMismatchError) as ei:
            run_scenario(src)
        exc = ei.value
        assert exc.step == step_no
        assert f"step {step_no}:" in exc.message
        assert "expected CAD to be Ready" in exc.message
        assert exc.transcript[-1]["ok"] is False

    def test_expect_error_on_succeeding_action(self):
        src = load_scenario()
        src["steps"] = src["steps"][:4] + [{
            "do": "expect_error", "code": "IllegalTransition",
            "action": {"do": "emit", "activity": "Digitalization",
                       "to": "CAD",
                       "record": {"point_count": 1, "spacing_mm": 1.0}}}]
        del src["expected_events"]
        with pytest.raises(ScenarioMismatchError) as ei:
            run_scenario(src)
        assert "but 'emit' succeeded" in ei.value.message

    def test_expect_error_with_wrong_code(self):
        src = load_scenario()
        src["steps"] = [{
            "do": "expect_error", "code": "UnknownActivity",
            "action": {"do": "terminate", "activity": "CAD",
                       "output": {}}}]
        del src["expected_events"]
        with pytest.raises(ScenarioMismatchError) as ei:
            run_scenario(src)
        assert "expected error UnknownActivity, got IllegalTransition" \
            in ei.value.message

    def test_unexpectedly_failing_action(self):
        src = load_scenario()
        src["steps"] = [{"do": "terminate", "activity": "CAD",
                         "output": {}}]
        del src["expected_events"]
        with pytest.raises(ScenarioMismatchError) as ei:
            run_scenario(src)
        assert "'terminate' failed with IllegalTransition" in ei.value.message

    def test_diverging_expected_event(self):
        src = load_scenario()
        src["expected_events"][3]["payload"] = {"rigged": True}
        with pytest.raises(ScenarioMismatchError) as ei:
            run_scenario(src)
        assert "event 4 diverges" in ei.value.message

    def test_expected_event_count_mismatch(self):
        src = load_scenario()
        src["expected_events"] = src["expected_events"][:-1]
        with pytest.raises(ScenarioMismatchError) as ei:
            run_scenario(src)
        assert "event count diverges" in ei.value.message

    def test_worklist_expectation_mismatch(self):
        src = load_scenario()
        src["steps"] = src["steps"][:1] + [{
            "do": "expect_worklist", "actor": "cad-eng",
            "anticipable": ["Simulation"]}]
        del src["expected_events"]
        with pytest.raises(ScenarioMismatchError) as ei:
            run_scenario(src)
        assert "expected anticipable=['Simulation']" in ei.value.message


class TestScenarioShapes:
    def test_inline_definition_and_defaults(self):
        doc = {
            "name": "tiny", "version": 1,
            "activities": [{"name": "Only", "split": "and"}],
            "control_edges": [], "data_edges": [], "formats": [],
        }
        result = run_scenario({
            "definition": doc,
            "steps": [
                {"do": "start", "activity": "Only"},
                {"do": "terminate", "activity": "Only"},
                {"do": "expect_status", "status": "Completed"},
            ]})
        assert result["passed"] is True

    def test_malformed_steps_rejected(self):
        doc = {
            "name": "tiny", "version": 1,
            "activities": [{"name": "Only", "split": "and"}],
            "control_edges": [], "data_edges": [], "formats": [],
        }
        with pytest.raises(ValueError):
            run_scenario({"definition": doc, "steps": [{"state": "x"}]})
        with pytest.raises(ValueError):
            run_scenario({"definition": doc,
                          "steps": [{"do": "teleport", "activity": "Only"}]})
        with pytest.raises(ValueError):
            run_scenario({"steps": []})

"""Command-line clients: wfctl (operator commands against a running server)
and wfd (the server daemon).

Exit codes: 0 success, 1 request rejected by the engine, 2 usage or IO
problems (unreachable server, unreadable file, malformed JSON argument).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import requests

from . import scenario as scenario_mod
from .errors import CoopflowError, ScenarioMismatchError
from .httpd import make_server
from .service import EngineService

DEFAULT_SERVER = "http://127.0.0.1:8143"


class _Rejected(Exception):
    def __init__(self, obj: dict):
        self.obj = obj


class _Unreachable(Exception):
    pass


def _request(server: str, method: str, path: str, *, json_body=None, data=None,
             stream: bool = False):
    url = server.rstrip("/") + path
    try:
        resp = requests.request(method, url, json=json_body, data=data, stream=stream,
                                headers={"Content-Type": "application/json"})
    except requests.RequestException as exc:
        raise _Unreachable(f"cannot reach {url}: {exc}")
    if resp.status_code >= 400:
        try:
            obj = resp.json()
        except ValueError:
            obj = {"code": "Internal", "message": resp.text.strip() or "no response body"}
        raise _Rejected(obj)
    return resp


def _print_rejection(obj: dict) -> None:
    code = obj.get("code", "Error")
    message = obj.get("message", "")
    print(f"error {code}: {message}", file=sys.stderr)
    for v in obj.get("violations", []):
        print(f"  - {v.get('code')}: {v.get('message')}", file=sys.stderr)


def _print_events(obj: dict) -> None:
    for ev in obj.get("events", []):
        print(json.dumps(ev))


def _parse_json_arg(text: str) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"--data is not valid JSON: {exc.msg}")
    if not isinstance(obj, dict):
        raise ValueError("--data must be a JSON object")
    return obj


def _iter_sse(resp):
    """Yield parsed {id, event, data} dicts from a text/event-stream response."""
    fields: dict = {}
    # chunk_size=1 so frames are seen as they arrive; the default would
    # buffer half a kilobyte before yielding the first line
    for raw in resp.iter_lines(chunk_size=1, decode_unicode=True):
        if raw is None:
            continue
        if raw == "":
            if "data" in fields:
                yield fields
            fields = {}
            continue
        if raw.startswith(":"):
            continue
        key, _, value = raw.partition(":")
        fields[key] = value[1:] if value.startswith(" ") else value


def _cmd_events(args) -> int:
    follow = args.follow
    target_seq = None
    if not follow:
        status = _request(args.server, "GET", f"/instances/{args.id}").json()
        target_seq = status["seq"]
        if target_seq == 0:
            return 0
    resp = _request(args.server, "GET", f"/instances/{args.id}/events?from=0", stream=True)
    try:
        for frame in _iter_sse(resp):
            obj = json.loads(frame["data"])
            print(json.dumps(obj))
            if not follow and obj["seq"] >= target_seq:
                break
            if follow and obj["kind"] == "InstanceCompleted":
                break
    finally:
        resp.close()
    return 0


def wfctl_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wfctl", description="Workflow engine client")
    parser.add_argument("--server", default=DEFAULT_SERVER,
                        help=f"server base URL (default {DEFAULT_SERVER})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="load a definition file onto the server")
    p.add_argument("file")

    p = sub.add_parser("new", help="create an instance of a loaded definition")
    p.add_argument("definition")
    p.add_argument("--no-anticipation", action="store_true")

    p = sub.add_parser("status", help="show an instance summary")
    p.add_argument("id")

    p = sub.add_parser("worklist", help="show the activity worklist")
    p.add_argument("id")
    p.add_argument("--actor")

    p = sub.add_parser("start", help="start a ready or anticipable activity")
    p.add_argument("id")
    p.add_argument("activity")

    p = sub.add_parser("terminate", help="terminate an executing activity")
    p.add_argument("id")
    p.add_argument("activity")
    p.add_argument("--data", default="{}", help="output record as JSON")

    p = sub.add_parser("emit", help="emit a provisional record on a data edge")
    p.add_argument("id")
    p.add_argument("activity")
    p.add_argument("--to", required=True)
    p.add_argument("--feedback", action="store_true")
    p.add_argument("--data", required=True, help="record as JSON")

    p = sub.add_parser("cancel", help="cancel an unstarted activity")
    p.add_argument("id")
    p.add_argument("activity")

    p = sub.add_parser("events", help="print an instance's event log")
    p.add_argument("id")
    p.add_argument("--follow", action="store_true")

    p = sub.add_parser("run-script", help="run a scenario file against a fresh engine")
    p.add_argument("file")

    args = parser.parse_args(argv)
    try:
        return _run_command(args)
    except _Rejected as exc:
        _print_rejection(exc.obj)
        return 1
    except _Unreachable as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 0


def _run_command(args) -> int:
    cmd = args.command
    if cmd == "load":
        text = Path(args.file).read_text("utf-8")
        resp = _request(args.server, "POST", "/definitions", data=text.encode("utf-8"))
        print(json.dumps(resp.json()))
        return 0
    if cmd == "new":
        body = {"definition": args.definition, "anticipation": not args.no_anticipation}
        resp = _request(args.server, "POST", "/instances", json_body=body)
        print(resp.json()["id"])
        return 0
    if cmd == "status":
        resp = _request(args.server, "GET", f"/instances/{args.id}")
        print(json.dumps(resp.json(), indent=2))
        return 0
    if cmd == "worklist":
        path = f"/instances/{args.id}/worklist"
        if args.actor:
            path += f"?actor={args.actor}"
        resp = _request(args.server, "GET", path)
        print(json.dumps(resp.json(), indent=2))
        return 0
    if cmd == "start":
        resp = _request(args.server, "POST",
                        f"/instances/{args.id}/activities/{args.activity}/start",
                        json_body={})
        _print_events(resp.json())
        return 0
    if cmd == "terminate":
        output = _parse_json_arg(args.data)
        resp = _request(args.server, "POST",
                        f"/instances/{args.id}/activities/{args.activity}/terminate",
                        json_body={"output": output})
        _print_events(resp.json())
        return 0
    if cmd == "emit":
        record = _parse_json_arg(args.data)
        body = {"edge": {"to": args.to, "feedback": args.feedback}, "record": record}
        resp = _request(args.server, "POST",
                        f"/instances/{args.id}/activities/{args.activity}/emit",
                        json_body=body)
        _print_events(resp.json())
        return 0
    if cmd == "cancel":
        resp = _request(args.server, "POST",
                        f"/instances/{args.id}/activities/{args.activity}/cancel",
                        json_body={})
        _print_events(resp.json())
        return 0
    if cmd == "events":
        return _cmd_events(args)
    if cmd == "run-script":
        try:
            result = scenario_mod.run_script(args.file)
        except ScenarioMismatchError as exc:
            print(f"scenario failed: {exc.message}", file=sys.stderr)
            return 1
        except CoopflowError as exc:
            print(f"error {exc.code}: {exc.message}", file=sys.stderr)
            return 1
        print(json.dumps(result, indent=2))
        return 0
    raise ValueError(f"unknown command {cmd!r}")


def wfd_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wfd", description="Workflow engine server")
    parser.add_argument("--listen", default="127.0.0.1:8143", help="addr:port to bind")
    parser.add_argument("--data-dir", default="./wf-data", help="event log directory")
    args = parser.parse_args(argv)
    host, sep, port_s = args.listen.rpartition(":")
    if not sep or not host:
        print(f"--listen must be addr:port, got {args.listen!r}", file=sys.stderr)
        return 2
    try:
        port = int(port_s)
    except ValueError:
        print(f"--listen port is not a number: {port_s!r}", file=sys.stderr)
        return 2
    try:
        service = EngineService(data_dir=args.data_dir)
        server = make_server(service, host, port)
    except (OSError, CoopflowError) as exc:
        print(f"cannot start: {exc}", file=sys.stderr)
        return 2
    print(f"listening on http://{host}:{port} (data dir {args.data_dir})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
        service.close()
    return 0

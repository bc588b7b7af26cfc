"""HTTP/JSON control plane with a server-sent event stream.

Every engine fault maps to exactly one (status, code) pair via the error
class; unexpected exceptions become 500 Internal without killing the
server. CORS is wide open so a separately served browser client can call
the API directly.
"""
from __future__ import annotations

import json
import re
import sys
import traceback
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit

from .errors import BadRequestError, CoopflowError, UnknownKeyError
from .service import EngineService

_MAX_BODY = 10 * 1024 * 1024


def _check_keys(obj: dict, allowed: "set[str]", where: str) -> None:
    extra = set(obj) - allowed
    if extra:
        raise UnknownKeyError(f"unknown key '{sorted(extra)[0]}' in {where}")


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "coopflow"

    @property
    def svc(self) -> EngineService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, format: str, *args) -> None:
        if getattr(self.server, "verbose", False):
            sys.stderr.write("%s - %s\n" % (self.address_string(), format % args))

    # --- plumbing ---

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")

    def _send_json(self, status: int, obj: object) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _send_error_obj(self, exc: CoopflowError) -> None:
        obj: dict = {"code": exc.code, "message": exc.message}
        report = getattr(exc, "report", None)
        if report is not None:
            obj["violations"] = [
                {"code": v.code, "message": v.message} for v in report.violations
            ]
        self._send_json(exc.http_status, obj)

    def _read_body(self) -> str:
        length = int(self.headers.get("Content-Length") or 0)
        if length > _MAX_BODY:
            raise BadRequestError("request body too large")
        return self.rfile.read(length).decode("utf-8") if length else ""

    def _read_json_body(self) -> dict:
        raw = self._read_body()
        if not raw.strip():
            return {}
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise BadRequestError(f"request body is not valid JSON: {exc.msg}")
        if not isinstance(obj, dict):
            raise BadRequestError("request body must be a JSON object")
        return obj

    def _dispatch(self, method: str) -> None:
        try:
            split = urlsplit(self.path)
            segments = [unquote(s) for s in split.path.split("/") if s]
            query = parse_qs(split.query)
            self._route(method, segments, query)
        except CoopflowError as exc:
            try:
                self._send_error_obj(exc)
            except (BrokenPipeError, ConnectionResetError):
                pass
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception:
            traceback.print_exc()
            try:
                self._send_json(500, {"code": "Internal", "message": "unexpected server error"})
            except (BrokenPipeError, ConnectionResetError):
                pass

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self._cors()
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID")
        self.send_header("Access-Control-Max-Age", "86400")
        self.send_header("Content-Length", "0")
        self.end_headers()

    # --- routing ---

    def _route(self, method: str, seg: "list[str]", query: dict) -> None:
        if method == "POST" and seg == ["definitions"]:
            result = self.svc.load_definition(self._read_body())
            return self._send_json(201, result)
        if method == "GET" and len(seg) == 2 and seg[0] == "definitions":
            return self._send_json(200, self.svc.get_definition(seg[1]))
        if method == "POST" and seg == ["instances"]:
            body = self._read_json_body()
            _check_keys(body, {"definition", "id", "anticipation"}, "create request")
            definition = body.get("definition")
            if not isinstance(definition, str):
                raise BadRequestError("create request needs a string 'definition'")
            iid = body.get("id")
            if iid is not None and (not isinstance(iid, str) or not iid
                                    or not re.fullmatch(r"[A-Za-z0-9._-]+", iid)):
                raise BadRequestError("'id' must use letters, digits, dot, dash, underscore")
            anticipation = body.get("anticipation", True)
            if not isinstance(anticipation, bool):
                raise BadRequestError("'anticipation' must be a boolean")
            return self._send_json(201, self.svc.create_instance(definition, iid, anticipation))
        if method == "GET" and len(seg) == 2 and seg[0] == "instances":
            return self._send_json(200, self.svc.instance_status(seg[1]))
        if method == "GET" and len(seg) == 3 and seg[0] == "instances" and seg[2] == "worklist":
            actor = query.get("actor", [None])[0]
            return self._send_json(200, self.svc.worklist(seg[1], actor))
        if method == "GET" and len(seg) == 4 and seg[0] == "instances" and seg[2] == "inputs":
            return self._send_json(200, self.svc.inputs(seg[1], seg[3]))
        if method == "GET" and len(seg) == 3 and seg[0] == "instances" and seg[2] == "events":
            return self._stream_events(seg[1], query)
        if (method == "POST" and len(seg) == 5 and seg[0] == "instances"
                and seg[2] == "activities"):
            return self._activity_action(seg[1], seg[3], seg[4])
        raise _NotFound(f"no route for {method} {'/' + '/'.join(seg)}")

    def _activity_action(self, instance_id: str, activity: str, action: str) -> None:
        if action == "start":
            body = self._read_json_body()
            _check_keys(body, {"actor"}, "start request")
            actor = body.get("actor")
            if actor is not None and not isinstance(actor, str):
                raise BadRequestError("'actor' must be a string")
            events = self.svc.start(instance_id, activity, actor)
        elif action == "terminate":
            body = self._read_json_body()
            _check_keys(body, {"output"}, "terminate request")
            output = body.get("output", {})
            if not isinstance(output, dict):
                raise BadRequestError("'output' must be an object")
            events = self.svc.terminate(instance_id, activity, output)
        elif action == "cancel":
            body = self._read_json_body()
            _check_keys(body, set(), "cancel request")
            events = self.svc.cancel(instance_id, activity)
        elif action == "emit":
            body = self._read_json_body()
            _check_keys(body, {"edge", "record"}, "emit request")
            edge = body.get("edge")
            if not isinstance(edge, dict):
                raise BadRequestError("emit request needs an 'edge' object")
            _check_keys(edge, {"to", "feedback"}, "emit edge")
            to = edge.get("to")
            if not isinstance(to, str):
                raise BadRequestError("emit edge needs a string 'to'")
            feedback = edge.get("feedback", False)
            if not isinstance(feedback, bool):
                raise BadRequestError("'feedback' must be a boolean")
            record = body.get("record")
            if not isinstance(record, dict):
                raise BadRequestError("emit request needs a 'record' object")
            events = self.svc.emit(instance_id, activity, to, feedback, record)
        else:
            raise _NotFound(f"unknown activity action '{action}'")
        self._send_json(200, {"events": [ev.to_json_obj() for ev in events]})

    # --- event stream ---

    def _stream_events(self, instance_id: str, query: dict) -> None:
        last_id = self.headers.get("Last-Event-ID")
        raw_from = last_id if last_id is not None else query.get("from", ["0"])[0]
        try:
            from_seq = int(raw_from)
        except (TypeError, ValueError):
            raise BadRequestError("'from' must be an integer event sequence")
        subscription = self.svc.subscribe(
            instance_id, from_seq,
            poll_timeout=getattr(self.server, "sse_poll_timeout", 10.0))
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Connection", "close")
        self._cors()
        self.end_headers()
        try:
            for ev in subscription:
                if ev is None:
                    self.wfile.write(b": keep-alive\n\n")
                else:
                    frame = (
                        f"id: {ev.seq}\n"
                        f"event: {ev.kind.value}\n"
                        f"data: {json.dumps(ev.to_json_obj())}\n\n"
                    )
                    self.wfile.write(frame.encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, TimeoutError):
            pass
        finally:
            subscription.close()
            self.close_connection = True


class _NotFound(CoopflowError):
    code = "UnknownRoute"
    http_status = 404


def make_server(service: EngineService, host: str = "127.0.0.1", port: int = 8143,
                sse_poll_timeout: float = 10.0, verbose: bool = False) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), ApiHandler)
    server.daemon_threads = True
    server.service = service  # type: ignore[attr-defined]
    server.sse_poll_timeout = sse_poll_timeout  # type: ignore[attr-defined]
    server.verbose = verbose  # type: ignore[attr-defined]
    return server

"""HTTP chat service over a loaded checkpoint.

The routing core is plain methods returning (status, payload) pairs so
tests can drive it without sockets; the request handler is a thin JSON
shell on top. Sessions are serialized per id with a lock and expire
after a configurable idle window.

Routes:
    POST   /api/sessions                     create a session
    POST   /api/sessions/{id}/utterance      one user turn
    GET    /api/sessions/{id}/transcript     all turns so far
    GET    /api/sessions/{id}/trace/{t}      attention bundle for turn t
    DELETE /api/sessions/{id}               drop the session
    GET    /api/health                       service and model info
    GET    /...                              static files (webui)
"""

from __future__ import annotations

import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import TaskdialError
from .inference import Session, export_trace
from .ontology import DialogueState

_SESSION_RE = re.compile(r"^/api/sessions/([0-9a-f]+)$")
_UTTERANCE_RE = re.compile(r"^/api/sessions/([0-9a-f]+)/utterance$")
_TRANSCRIPT_RE = re.compile(r"^/api/sessions/([0-9a-f]+)/transcript$")
_TRACE_RE = re.compile(r"^/api/sessions/([0-9a-f]+)/trace/(\d+)$")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".map": "application/json",
    ".ico": "image/x-icon",
}

_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>taskdial</title></head>
<body style="font-family: sans-serif; max-width: 40em; margin: 3em auto;">
<h1>taskdial chat service</h1>
<p>The service is running, but no web client is installed.
Point <code>static_dir</code> at a built frontend, or use the JSON API:</p>
<pre>POST /api/sessions
POST /api/sessions/{id}/utterance   {"text": "..."}
GET  /api/sessions/{id}/transcript
GET  /api/sessions/{id}/trace/{turn}</pre>
</body></html>
"""


class ChatService:
    """Session registry plus request handlers, independent of HTTP."""

    def __init__(self, model, kb, idle_minutes: float = 30.0, max_turns: int = 40):
        self.model = model
        self.kb = kb
        self.idle_seconds = idle_minutes * 60.0
        self.max_turns = max_turns
        self._sessions = {}  # id -> [Session, lock, last_seen]
        self._lock = threading.Lock()

    # -- session bookkeeping ---------------------------------------------

    def expire_idle(self, now: float = None):
        """Drop sessions idle longer than the configured window."""
        now = time.monotonic() if now is None else now
        with self._lock:
            stale = [sid for sid, (_, _, seen) in self._sessions.items()
                     if now - seen > self.idle_seconds]
            for sid in stale:
                del self._sessions[sid]
        return stale

    def _get(self, sid: str):
        with self._lock:
            entry = self._sessions.get(sid)
            if entry is not None:
                entry[2] = time.monotonic()
            return entry

    @property
    def n_sessions(self) -> int:
        with self._lock:
            return len(self._sessions)

    # -- handlers: each returns (status, payload) --------------------------

    def health(self):
        return 200, {
            "status": "ok",
            "mode": self.model.cfg.mode,
            "domains": list(self.model.ontology.domains),
            "sessions": self.n_sessions,
        }

    def create_session(self, body: dict):
        session = Session(self.model, self.kb, max_turns=self.max_turns)
        with self._lock:
            self._sessions[session.id] = [session, threading.Lock(), time.monotonic()]
        return 201, {
            "session_id": session.id,
            "mode": self.model.cfg.mode,
            "domains": list(self.model.ontology.domains),
            "max_turns": session.max_turns,
        }

    def post_utterance(self, sid: str, body: dict):
        entry = self._get(sid)
        if entry is None:
            return 404, {"error": f"no session {sid}"}
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            return 400, {"error": "body must carry a non-empty 'text' string"}
        gold_state = None
        if "state" in body:
            if self.model.cfg.mode != "c2t":
                return 400, {"error": "only c2t sessions accept a supplied state; "
                                      f"this model tracks its own ({self.model.cfg.mode})"}
            try:
                gold_state = DialogueState.from_dict(body["state"])
                gold_state.validate(self.model.ontology)
            except (TaskdialError, TypeError, AttributeError, KeyError) as e:
                return 400, {"error": f"bad state: {e}"}
        session, lock, _ = entry
        try:
            with lock:
                record = session.step_turn(text, gold_state=gold_state)
        except ValueError as e:
            # condition-to-text models need the gold state supplied
            return 400, {"error": str(e)}
        except RuntimeError as e:
            return 409, {"error": str(e)}
        except TaskdialError as e:
            return 400, {"error": str(e)}
        payload = record.to_dict()
        payload["trace_url"] = f"/api/sessions/{sid}/trace/{record.turn_index}"
        return 200, payload

    def get_transcript(self, sid: str):
        entry = self._get(sid)
        if entry is None:
            return 404, {"error": f"no session {sid}"}
        session, lock, _ = entry
        with lock:
            turns = [r.to_dict() for r in session.transcript]
        return 200, {"session_id": sid, "mode": self.model.cfg.mode, "turns": turns}

    def get_trace(self, sid: str, turn_index: int):
        entry = self._get(sid)
        if entry is None:
            return 404, {"error": f"no session {sid}"}
        session, lock, _ = entry
        try:
            with lock:
                bundle = export_trace(session, turn_index)
        except IndexError as e:
            return 404, {"error": str(e)}
        return 200, bundle

    def delete_session(self, sid: str):
        with self._lock:
            if sid not in self._sessions:
                return 404, {"error": f"no session {sid}"}
            del self._sessions[sid]
        return 200, {"deleted": True, "session_id": sid}

    # -- dispatch ----------------------------------------------------------

    def dispatch(self, method: str, path: str, body: dict | None = None):
        """Route an API request; returns (status, payload) or None if the
        path is not an API path."""
        if not path.startswith("/api/"):
            return None
        self.expire_idle()
        if method == "GET" and path == "/api/health":
            return self.health()
        if method == "POST" and path == "/api/sessions":
            return self.create_session(body or {})
        m = _UTTERANCE_RE.match(path)
        if m and method == "POST":
            return self.post_utterance(m.group(1), body or {})
        m = _TRANSCRIPT_RE.match(path)
        if m and method == "GET":
            return self.get_transcript(m.group(1))
        m = _TRACE_RE.match(path)
        if m and method == "GET":
            return self.get_trace(m.group(1), int(m.group(2)))
        m = _SESSION_RE.match(path)
        if m and method == "DELETE":
            return self.delete_session(m.group(1))
        return 404, {"error": f"no route {method} {path}"}


def make_handler(service: ChatService, static_dir: str = ""):
    static_root = Path(static_dir).resolve() if static_dir else None

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send_json(self, status: int, payload: dict):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self):
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            if not raw:
                return {}
            return json.loads(raw.decode("utf-8"))

        def _api(self, method: str):
            try:
                body = self._read_body() if method in ("POST",) else {}
            except (json.JSONDecodeError, UnicodeDecodeError) as e:
                self._send_json(400, {"error": f"malformed JSON body: {e}"})
                return True
            result = service.dispatch(method, self.path, body)
            if result is None:
                return False
            self._send_json(*result)
            return True

        def _static(self):
            rel = self.path.split("?", 1)[0].lstrip("/") or "index.html"
            if static_root is not None:
                target = (static_root / rel).resolve()
                # refuse path escapes out of the static root
                if static_root in target.parents or target == static_root:
                    if target.is_file():
                        data = target.read_bytes()
                        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
                        self.send_response(200)
                        self.send_header("Content-Type", ctype)
                        self.send_header("Content-Length", str(len(data)))
                        self.end_headers()
                        self.wfile.write(data)
                        return
            if rel == "index.html":
                data = _FALLBACK_PAGE.encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)
                return
            self._send_json(404, {"error": f"not found: {self.path}"})

        def do_GET(self):
            if not self._api("GET"):
                self._static()

        def do_POST(self):
            if not self._api("POST"):
                self._send_json(404, {"error": f"no route POST {self.path}"})

        def do_DELETE(self):
            if not self._api("DELETE"):
                self._send_json(404, {"error": f"no route DELETE {self.path}"})

    return Handler


def make_server(model, kb, host: str = "127.0.0.1", port: int = 0,
                static_dir: str = "", idle_minutes: float = 30.0):
    """Build the ThreadingHTTPServer without starting it (port 0 = ephemeral)."""
    service = ChatService(model, kb, idle_minutes=idle_minutes)
    handler = make_handler(service, static_dir)
    server = ThreadingHTTPServer((host, port), handler)
    server.service = service
    return server


def run_server(model, kb, service_cfg):
    server = make_server(model, kb, host=service_cfg.host, port=service_cfg.port,
                         static_dir=service_cfg.static_dir,
                         idle_minutes=service_cfg.idle_minutes)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}/ (ctrl-c to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0

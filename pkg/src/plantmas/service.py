"""Service mode: the lifting workflow behind an HTTP + event-stream surface.

The simulation runs in a background thread, one logical tick per
``tick_interval`` seconds.  Externally submitted approval decisions are
queued and consumed only at tick boundaries, so a recorded decision log
replays to the same trace.

Surface (all responses carry ``schema: plantmas/v1``):

    GET  /api/snapshot                 workflow status summary
    GET  /api/proposals/pending        proposals awaiting a decision
    POST /api/decisions                submit an approval decision
    POST /api/chat                     chat-style command (accept/contest/status/help)
    GET  /api/events?since=N           server-sent events, one trace record each
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlparse

from . import org
from .harness import ScenarioConfig, build_lifting_config
from .trace import Trace
from .workflow import (
    ApprovalDecision,
    InvalidDecision,
    LiftingRuntime,
    QueueApprover,
    chatbot_parse,
)

SCHEMA = "plantmas/v1"

log = logging.getLogger(__name__)


class ApprovalService:
    """Owns the runtime, its trace, and the decision queue."""

    def __init__(self, cfg: ScenarioConfig, tick_interval: float = 0.2):
        if cfg.mode != "lifting":
            raise ValueError("service mode requires a lifting scenario config")
        self.approver = QueueApprover()
        self.trace = Trace()
        self.runtime = LiftingRuntime(build_lifting_config(cfg, approver=self.approver), self.trace)
        self.tick_interval = tick_interval
        self.lock = threading.Lock()
        self.changed = threading.Condition(self.lock)
        self.done = False
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    # -- simulation loop ------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, name="sim-loop", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        with self.changed:
            self.changed.notify_all()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _loop(self) -> None:
        rt = self.runtime
        with self.changed:
            self.trace.set_time(0, 0.0)
            for role, agent_name in sorted(rt.state.commitments.items()):
                self.trace.add("org", "event", {"commit": {"role": role, "agent": agent_name}})
            self.changed.notify_all()
        root = org.WAITING
        for tick in range(rt.cfg.max_ticks):
            if self._stop.is_set():
                break
            with self.changed:
                rt.tick = tick
                self.trace.set_time(tick, float(tick))
                rt.step_tick()
                root = rt.state.root_status()
                self.changed.notify_all()
            if root in (org.ACHIEVED, org.FAILED):
                break
            self._stop.wait(self.tick_interval)
        with self.changed:
            rt._goal_status(rt.scheme.root.id, rt.state.root_status())
            self.done = True
            self.changed.notify_all()

    # -- queries and commands (handler thread) ---------------------------------

    def snapshot(self) -> dict:
        with self.lock:
            return {
                "schema": SCHEMA,
                "tick": self.runtime.tick,
                "root_status": self.runtime.state.root_status(),
                "done": self.done,
                "rounds": self.runtime.round,
                "pending": self.runtime.pending_proposals(),
                "last_seq": self.trace.records[-1].seq if self.trace.records else -1,
                "goal_status": {
                    g.id: self.runtime.state.status(g.id)
                    for g in self.runtime.scheme.leaves()
                },
            }

    def pending(self) -> dict:
        with self.lock:
            return {"schema": SCHEMA, "proposals": self.runtime.pending_proposals()}

    def submit_decision(self, doc: dict) -> dict:
        decision = ApprovalDecision(
            proposal_id=str(doc.get("proposal_id", "")),
            actor=str(doc.get("actor", "")),
            verdict=str(doc.get("verdict", "")),
            adjustments={k: float(v) for k, v in (doc.get("adjustments") or {}).items()},
            note=str(doc.get("note", "")),
        )
        with self.lock:
            self.approver.submit(decision)
        return {"schema": SCHEMA, "status": "queued", "decision": decision.to_doc()}

    def chat(self, doc: dict) -> dict:
        """Chat command surface; accept/contest become queued decisions."""
        actor = str(doc.get("actor", ""))
        parsed = chatbot_parse(str(doc.get("command", "")))
        if parsed["kind"] in ("accept", "contest"):
            reply = self.submit_decision({
                "proposal_id": parsed["id"],
                "actor": actor,
                "verdict": parsed["kind"],
                "adjustments": parsed.get("adjustments") or {},
                "note": parsed.get("note", ""),
            })
            reply["kind"] = parsed["kind"]
            return reply
        if parsed["kind"] == "status":
            reply = self.snapshot()
            reply["kind"] = "status"
            return reply
        return {"schema": SCHEMA, "kind": "help", "message": parsed["message"]}

    def records_after(self, seq: int) -> tuple[list, bool]:
        with self.lock:
            recs = [r for r in self.trace.records if r.seq > seq]
            return recs, self.done

    def wait_for_change(self, timeout: float) -> None:
        with self.changed:
            self.changed.wait(timeout)


def _make_handler(service: ApprovalService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("%s - %s", self.address_string(), fmt % args)

        def _cors(self) -> None:
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def _json(self, status: int, doc: dict) -> None:
            body = json.dumps(doc, sort_keys=True).encode()
            self.send_response(status)
            self._cors()
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length) if length else b"{}"
            doc = json.loads(raw)
            if not isinstance(doc, dict):
                raise ValueError("request body must be a JSON object")
            return doc

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/api/snapshot":
                self._json(200, service.snapshot())
            elif url.path == "/api/proposals/pending":
                self._json(200, service.pending())
            elif url.path == "/api/events":
                self._stream_events(url)
            else:
                self._json(404, {"schema": SCHEMA, "error": "not found"})

        def do_POST(self):
            url = urlparse(self.path)
            try:
                doc = self._read_body()
            except (ValueError, json.JSONDecodeError) as exc:
                self._json(400, {"schema": SCHEMA, "error": str(exc)})
                return
            try:
                if url.path == "/api/decisions":
                    self._json(202, service.submit_decision(doc))
                elif url.path == "/api/chat":
                    self._json(200, service.chat(doc))
                else:
                    self._json(404, {"schema": SCHEMA, "error": "not found"})
            except (InvalidDecision, ValueError) as exc:
                self._json(400, {"schema": SCHEMA, "error": str(exc)})

        def _stream_events(self, url) -> None:
            query = parse_qs(url.query)
            last = int(query.get("since", ["-1"])[0])
            self.send_response(200)
            self._cors()
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.end_headers()
            try:
                while True:
                    records, done = service.records_after(last)
                    for rec in records:
                        last = rec.seq
                        self.wfile.write(f"id: {rec.seq}\ndata: {rec.to_json()}\n\n".encode())
                    self.wfile.flush()
                    if done and not records:
                        self.wfile.write(b"event: end\ndata: {}\n\n")
                        self.wfile.flush()
                        return
                    service.wait_for_change(1.0)
            except (BrokenPipeError, ConnectionResetError):
                pass

    return Handler


class ServeHandle:
    def __init__(self, service: ApprovalService, httpd: ThreadingHTTPServer):
        self.service = service
        self.httpd = httpd
        self.port = httpd.server_address[1]
        self._thread = threading.Thread(target=httpd.serve_forever, name="http", daemon=True)

    def start(self) -> "ServeHandle":
        self.service.start()
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self.service.stop()
        self.httpd.shutdown()
        self.httpd.server_close()
        self._thread.join(timeout=5.0)


def serve(cfg: ScenarioConfig, port: int = 8750, tick_interval: float = 0.2) -> ServeHandle:
    """Host the lifting workflow; returns a handle (call ``shutdown`` to stop)."""
    service = ApprovalService(cfg, tick_interval=tick_interval)
    httpd = ThreadingHTTPServer(("127.0.0.1", port), _make_handler(service))
    return ServeHandle(service, httpd).start()

"""Integration layer: agents vs. artifacts, routing, and stub services.

Every external entity is registered as either an agent (message-based) or
an artifact (synchronous call/result).  Artifacts run in-process as pure
functions or over HTTP (one POST endpoint per operation).  Deterministic
stubs for the modeller, optimizer, control system, and external agency let
the lifting workflow run headless.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

import requests

AGENT = "agent"
ARTIFACT = "artifact"

IN_PROCESS = "in_process"
HTTP = "http"

OK = "ok"
FAULT = "fault"

_ENDPOINT_RE = re.compile(r"^https?://[^\s/]+(:\d+)?(/.*)?$")


class MediationError(Exception):
    retryable = False


class UnknownEntityError(MediationError):
    pass


class KindMismatchError(MediationError):
    pass


class DuplicateEntityError(MediationError):
    pass


class ArtifactTimeout(MediationError):
    retryable = True


@dataclass(frozen=True)
class EntityDescriptor:
    name: str
    kind: str                       # agent | artifact
    transport: str = IN_PROCESS     # in_process | http
    endpoint: Optional[str] = None
    handler: Optional[Callable] = None   # in_process artifacts

    def __post_init__(self):
        if self.kind not in (AGENT, ARTIFACT):
            raise MediationError(f"invalid kind {self.kind!r}")
        if self.transport == HTTP:
            if not self.endpoint or not _ENDPOINT_RE.match(self.endpoint):
                raise MediationError(f"entity {self.name!r}: malformed endpoint {self.endpoint!r}")


@dataclass(frozen=True)
class ArtifactCall:
    operation: str
    payload: dict
    correlation_id: str


@dataclass(frozen=True)
class ArtifactResult:
    correlation_id: str
    status: str
    payload: dict


class StubFault(Exception):
    """Raised by a stub to produce a fault-status result."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


class Registry:
    def __init__(self, http_timeout: float = 5.0):
        self.entities: dict[str, EntityDescriptor] = {}
        self.http_timeout = http_timeout

    def register(self, descriptor: EntityDescriptor) -> "Registry":
        if descriptor.name in self.entities:
            raise DuplicateEntityError(f"entity {descriptor.name!r} already registered")
        self.entities[descriptor.name] = descriptor
        return self

    def resolve(self, name: str) -> EntityDescriptor:
        try:
            return self.entities[name]
        except KeyError:
            raise UnknownEntityError(f"unknown entity {name!r}") from None


def invoke_artifact(registry: Registry, name: str, call: ArtifactCall) -> ArtifactResult:
    """Synchronous artifact invocation; in-process stubs are pure functions."""
    entity = registry.resolve(name)
    if entity.kind != ARTIFACT:
        raise KindMismatchError(f"entity {name!r} is an agent, not an artifact")
    if entity.transport == IN_PROCESS:
        try:
            payload = entity.handler(call.operation, call.payload)
        except StubFault as exc:
            return ArtifactResult(call.correlation_id, FAULT,
                                  {"code": exc.code, "detail": exc.detail})
        return ArtifactResult(call.correlation_id, OK, payload)
    url = f"{entity.endpoint.rstrip('/')}/{call.operation}"
    try:
        resp = requests.post(url, json=call.payload, timeout=registry.http_timeout)
    except (requests.Timeout, requests.ConnectionError) as exc:
        raise ArtifactTimeout(f"{name!r}: {exc}") from exc
    if resp.status_code == 200:
        return ArtifactResult(call.correlation_id, OK, resp.json())
    try:
        body = resp.json()
    except ValueError:
        body = {"code": "http_error", "detail": resp.text[:200]}
    return ArtifactResult(call.correlation_id, FAULT, body)


# ---------------------------------------------------------------------------
# lock-step message bus


@dataclass(frozen=True)
class Message:
    sender: str
    recipient: str
    performative: str   # tell | achieve | reply
    content: object
    sent_tick: int
    seq: int


@dataclass
class DeliveryReceipt:
    message: Message
    deliver_at: int


class MessageBus:
    """Per-(sender, recipient) FIFO delivery at the next tick."""

    def __init__(self, registry: Registry):
        self.registry = registry
        self._pending: list[tuple[int, Message]] = []
        self._seq = 0

    def send(self, sender: str, recipient: str, performative: str, content,
             now: int) -> DeliveryReceipt:
        entity = self.registry.resolve(recipient)
        if entity.kind != AGENT:
            raise KindMismatchError(f"cannot message artifact {recipient!r}")
        if performative not in ("tell", "achieve", "reply"):
            raise MediationError(f"unknown performative {performative!r}")
        msg = Message(sender, recipient, performative, content, now, self._seq)
        self._seq += 1
        self._pending.append((now + 1, msg))
        return DeliveryReceipt(msg, now + 1)

    def deliver(self, now: int) -> list[Message]:
        due = [m for t, m in self._pending if t <= now]
        self._pending = [(t, m) for t, m in self._pending if t > now]
        return sorted(due, key=lambda m: m.seq)


# ---------------------------------------------------------------------------
# deterministic stub services


def body_hash(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def modeller_stub(operation: str, payload: dict) -> dict:
    """Reservoir data -> model {productivity_index, pressure}."""
    if operation != "build_model":
        raise StubFault("unknown_operation", operation)
    data = payload.get("reservoir_data")
    if not isinstance(data, dict):
        raise StubFault("schema", "missing reservoir_data")
    try:
        flows = [float(x) for x in data["flow_tests"]]
        drawdowns = [float(x) for x in data["drawdown_tests"]]
        pressures = [float(x) for x in data["pressure_tests"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise StubFault("schema", str(exc)) from exc
    if not flows or not drawdowns or not pressures or len(flows) != len(drawdowns):
        raise StubFault("schema", "empty or mismatched test series")
    pi = sum(f / d for f, d in zip(flows, drawdowns)) / len(flows)
    return {
        "productivity_index": round(pi, 6),
        "pressure": round(sum(pressures) / len(pressures), 6),
        "source": data.get("well", "unknown"),
    }


# concave quadratic production objective; the box-constrained optimum is the
# clamped unconstrained optimum because the objective is separable
_OBJ_WEIGHTS = {"injection_rate": 0.05, "pump_frequency": 0.2}


def _targets(model: dict) -> dict:
    pi = float(model["productivity_index"])
    pressure = float(model["pressure"])
    return {
        "injection_rate": 4.0 * pi + 0.3 * pressure,
        "pump_frequency": 30.0 + 0.2 * pressure,
    }


def production_objective(model: dict, params: dict) -> float:
    targets = _targets(model)
    base = 1000.0 + 2.0 * float(model["productivity_index"]) * float(model["pressure"]) / 10.0
    value = base
    for name, target in targets.items():
        value -= _OBJ_WEIGHTS[name] * (float(params[name]) - target) ** 2
    return round(value, 9)


def optimizer_stub(operation: str, payload: dict) -> dict:
    if operation != "optimize":
        raise StubFault("unknown_operation", operation)
    model = payload.get("model")
    constraints = payload.get("constraints")
    if not isinstance(model, dict) or not isinstance(constraints, dict):
        raise StubFault("schema", "need model and constraints")
    targets = _targets(model)
    params = {}
    for name, target in targets.items():
        box = constraints.get(name)
        if not isinstance(box, dict) or "lo" not in box or "hi" not in box:
            raise StubFault("schema", f"constraint box missing for {name}")
        lo, hi = float(box["lo"]), float(box["hi"])
        if lo > hi:
            raise StubFault("schema", f"empty box for {name}")
        params[name] = round(min(hi, max(lo, target)), 6)
    return {
        "parameters": params,
        "objective_value": production_objective(model, params),
        "constraints": constraints,
    }


def control_system_stub(operation: str, payload: dict) -> dict:
    if operation != "apply_setup":
        raise StubFault("unknown_operation", operation)
    params = payload.get("parameters")
    if not isinstance(params, dict) or not params:
        raise StubFault("schema", "missing parameters")
    return {"status": "applied", "parameters": params}


class AgencyStub:
    """Receipt ids are fresh per call; the body hash is pure in the payload."""

    def __init__(self):
        self._count = 0

    def __call__(self, operation: str, payload: dict) -> dict:
        if operation != "submit_report":
            raise StubFault("unknown_operation", operation)
        if "report" not in payload:
            raise StubFault("schema", "missing report")
        self._count += 1
        return {
            "receipt_id": f"RCPT-{self._count:04d}",
            "body_hash": body_hash(payload["report"]),
        }


def standard_registry(http_timeout: float = 5.0) -> Registry:
    """Registry with the four in-process stub artifacts plus lifting agents."""
    reg = Registry(http_timeout=http_timeout)
    reg.register(EntityDescriptor("modeller_artifact", ARTIFACT, IN_PROCESS, handler=modeller_stub))
    reg.register(EntityDescriptor("optimizer_artifact", ARTIFACT, IN_PROCESS, handler=optimizer_stub))
    reg.register(EntityDescriptor("control_system", ARTIFACT, IN_PROCESS, handler=control_system_stub))
    reg.register(EntityDescriptor("agency", ARTIFACT, IN_PROCESS, handler=AgencyStub()))
    return reg


# ---------------------------------------------------------------------------
# HTTP hosting of the stub artifacts (integration tests, service mode)


class _StubHandler(BaseHTTPRequestHandler):
    stubs: dict[str, Callable] = {}

    def log_message(self, fmt, *args):  # quiet test output
        pass

    def do_POST(self):
        parts = self.path.strip("/").split("/")
        if len(parts) != 3 or parts[0] != "artifact":
            self._reply(404, {"code": "not_found", "detail": self.path})
            return
        _, name, operation = parts
        stub = self.stubs.get(name)
        if stub is None:
            self._reply(404, {"code": "unknown_entity", "detail": name})
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
        except ValueError:
            self._reply(400, {"code": "bad_json"})
            return
        try:
            result = stub(operation, payload)
        except StubFault as exc:
            self._reply(422, {"code": exc.code, "detail": exc.detail})
            return
        self._reply(200, result)

    def _reply(self, status: int, payload: dict):
        body = json.dumps(payload, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


@dataclass
class StubServer:
    server: ThreadingHTTPServer
    thread: threading.Thread

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    def endpoint(self, name: str) -> str:
        return f"http://127.0.0.1:{self.port}/artifact/{name}"

    def shutdown(self):
        self.server.shutdown()
        self.thread.join(timeout=5)
        self.server.server_close()


def host_stubs(port: int = 0, stubs: Optional[dict[str, Callable]] = None) -> StubServer:
    handler = type("Handler", (_StubHandler,), {
        "stubs": stubs or {
            "modeller_artifact": modeller_stub,
            "optimizer_artifact": optimizer_stub,
            "control_system": control_system_stub,
            "agency": AgencyStub(),
        }
    })
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return StubServer(server, thread)

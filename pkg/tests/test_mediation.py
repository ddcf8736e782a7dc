import json

import pytest

from plantmas import mediation
from plantmas.mediation import (
    AgencyStub,
    ArtifactCall,
    ArtifactTimeout,
    DuplicateEntityError,
    EntityDescriptor,
    KindMismatchError,
    MediationError,
    MessageBus,
    Registry,
    UnknownEntityError,
    control_system_stub,
    host_stubs,
    invoke_artifact,
    modeller_stub,
    optimizer_stub,
    production_objective,
    standard_registry,
)

RESERVOIR = {
    "well": "W-07",
    "flow_tests": [120.0, 150.0, 180.0],
    "drawdown_tests": [10.0, 12.0, 15.0],
    "pressure_tests": [210.0, 205.0, 215.0],
}

CONSTRAINTS = {
    "injection_rate": {"lo": 60.0, "hi": 180.0},
    "pump_frequency": {"lo": 35.0, "hi": 80.0},
}


class TestRegistry:
    def test_register_and_resolve(self):
        reg = Registry()
        reg.register(EntityDescriptor("a1", mediation.AGENT))
        assert reg.resolve("a1").kind == mediation.AGENT

    def test_duplicate_name_rejected(self):
        reg = Registry()
        reg.register(EntityDescriptor("a1", mediation.AGENT))
        with pytest.raises(DuplicateEntityError):
            reg.register(EntityDescriptor("a1", mediation.ARTIFACT))

    def test_unknown_entity(self):
        with pytest.raises(UnknownEntityError):
            Registry().resolve("ghost")

    def test_invalid_kind_rejected(self):
        with pytest.raises(MediationError):
            EntityDescriptor("x", "robot")

    @pytest.mark.parametrize("bad", ["", "not a url", "ftp://x", "http://"])
    def test_malformed_http_endpoint_rejected(self, bad):
        with pytest.raises(MediationError):
            EntityDescriptor("x", mediation.ARTIFACT, mediation.HTTP, endpoint=bad)


class TestKindDiscipline:
    def test_cannot_invoke_agent_as_artifact(self):
        reg = Registry()
        reg.register(EntityDescriptor("someone", mediation.AGENT))
        with pytest.raises(KindMismatchError):
            invoke_artifact(reg, "someone", ArtifactCall("op", {}, "c1"))

    def test_cannot_message_artifact(self):
        reg = standard_registry()
        bus = MessageBus(reg)
        with pytest.raises(KindMismatchError):
            bus.send("x", "optimizer_artifact", "tell", "hi", 0)


class TestMessageBus:
    def make_bus(self):
        reg = Registry()
        for n in ("a", "b"):
            reg.register(EntityDescriptor(n, mediation.AGENT))
        return MessageBus(reg)

    def test_lockstep_delivery_next_tick(self):
        bus = self.make_bus()
        bus.send("a", "b", "tell", "m1", now=3)
        assert bus.deliver(3) == []
        delivered = bus.deliver(4)
        assert [m.content for m in delivered] == ["m1"]

    def test_fifo_order_preserved(self):
        bus = self.make_bus()
        for i in range(5):
            bus.send("a", "b", "tell", f"m{i}", now=0)
        assert [m.content for m in bus.deliver(1)] == [f"m{i}" for i in range(5)]

    def test_unknown_performative_rejected(self):
        bus = self.make_bus()
        with pytest.raises(MediationError):
            bus.send("a", "b", "shout", "hi", 0)


class TestStubs:
    def test_modeller_output(self):
        model = modeller_stub("build_model", {"reservoir_data": RESERVOIR})
        pi = (120 / 10 + 150 / 12 + 180 / 15) / 3
        assert model["productivity_index"] == round(pi, 6)
        assert model["pressure"] == 210.0

    def test_modeller_schema_fault(self):
        with pytest.raises(mediation.StubFault):
            modeller_stub("build_model", {"reservoir_data": {"well": "x"}})

    def test_optimizer_clamps_to_constraint_box(self):
        model = modeller_stub("build_model", {"reservoir_data": RESERVOIR})
        tight = {"injection_rate": {"lo": 60.0, "hi": 100.0},
                 "pump_frequency": {"lo": 35.0, "hi": 80.0}}
        out = optimizer_stub("optimize", {"model": model, "constraints": tight})
        assert out["parameters"]["injection_rate"] == 100.0

    def test_optimizer_interior_optimum_beats_neighbours(self):
        model = modeller_stub("build_model", {"reservoir_data": RESERVOIR})
        out = optimizer_stub("optimize", {"model": model, "constraints": CONSTRAINTS})
        params = out["parameters"]
        best = production_objective(model, params)
        for name in params:
            for d in (-0.5, 0.5):
                perturbed = dict(params)
                perturbed[name] = min(CONSTRAINTS[name]["hi"],
                                      max(CONSTRAINTS[name]["lo"], perturbed[name] + d))
                assert production_objective(model, perturbed) <= best + 1e-9

    def test_empty_constraint_box_faults(self):
        model = modeller_stub("build_model", {"reservoir_data": RESERVOIR})
        bad = {"injection_rate": {"lo": 100.0, "hi": 60.0},
               "pump_frequency": {"lo": 35.0, "hi": 80.0}}
        with pytest.raises(mediation.StubFault):
            optimizer_stub("optimize", {"model": model, "constraints": bad})

    def test_control_system_echoes_parameters(self):
        out = control_system_stub("apply_setup", {"parameters": {"x": 1.0}})
        assert out == {"status": "applied", "parameters": {"x": 1.0}}

    def test_agency_fresh_receipts_pure_hash(self):
        stub = AgencyStub()
        r1 = stub("submit_report", {"report": {"a": 1}})
        r2 = stub("submit_report", {"report": {"a": 1}})
        assert r1["receipt_id"] != r2["receipt_id"]
        assert r1["body_hash"] == r2["body_hash"]

    @pytest.mark.parametrize("stub,op,payload", [
        (modeller_stub, "build_model", {"reservoir_data": RESERVOIR}),
        (optimizer_stub, "optimize",
         {"model": {"productivity_index": 12.5, "pressure": 210.0}, "constraints": CONSTRAINTS}),
        (control_system_stub, "apply_setup", {"parameters": {"injection_rate": 120.0}}),
    ])
    def test_stub_determinism_100_calls(self, stub, op, payload):
        results = {json.dumps(stub(op, payload), sort_keys=True) for _ in range(100)}
        assert len(results) == 1


class TestInvocation:
    def test_in_process_ok(self):
        reg = standard_registry()
        res = invoke_artifact(reg, "modeller_artifact",
                              ArtifactCall("build_model", {"reservoir_data": RESERVOIR}, "c7"))
        assert res.status == mediation.OK
        assert res.correlation_id == "c7"

    def test_in_process_fault_result(self):
        reg = standard_registry()
        res = invoke_artifact(reg, "modeller_artifact",
                              ArtifactCall("build_model", {}, "c8"))
        assert res.status == mediation.FAULT
        assert res.payload["code"] == "schema"

    def test_connection_error_is_retryable_timeout(self):
        reg = Registry(http_timeout=0.2)
        reg.register(EntityDescriptor("remote", mediation.ARTIFACT, mediation.HTTP,
                                      endpoint="http://127.0.0.1:1/artifact/remote"))
        with pytest.raises(ArtifactTimeout) as exc:
            invoke_artifact(reg, "remote", ArtifactCall("op", {}, "c9"))
        assert exc.value.retryable


class TestHttpTransport:
    @pytest.fixture(scope="class")
    @staticmethod
    def server():
        server = host_stubs(port=0)
        yield server
        server.shutdown()

    def http_registry(self, server) -> Registry:
        reg = Registry()
        for name in ("modeller_artifact", "optimizer_artifact"):
            reg.register(EntityDescriptor(name, mediation.ARTIFACT, mediation.HTTP,
                                          endpoint=server.endpoint(name)))
        return reg

    def test_http_matches_in_process(self, server):
        reg = self.http_registry(server)
        call = ArtifactCall("build_model", {"reservoir_data": RESERVOIR}, "h1")
        remote = invoke_artifact(reg, "modeller_artifact", call)
        local = modeller_stub("build_model", {"reservoir_data": RESERVOIR})
        assert remote.status == mediation.OK
        assert remote.payload == local

    def test_http_fault_carries_machine_readable_code(self, server):
        reg = self.http_registry(server)
        res = invoke_artifact(reg, "modeller_artifact", ArtifactCall("build_model", {}, "h2"))
        assert res.status == mediation.FAULT
        assert res.payload["code"] == "schema"

    def test_http_unknown_operation(self, server):
        reg = self.http_registry(server)
        res = invoke_artifact(reg, "optimizer_artifact", ArtifactCall("fly", {}, "h3"))
        assert res.status == mediation.FAULT

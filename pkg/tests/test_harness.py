import json
import time
import urllib.request

import pytest
import yaml

from plantmas import cli
from plantmas.harness import (
    ConfigError,
    ScenarioConfig,
    bench_latency,
    compute_exchanger_metrics,
    load_config,
    reaction_latencies,
    run,
)
from plantmas.trace import read_trace

ALL_SCENARIOS = [
    "exchanger/agent.yaml",
    "exchanger/sfc.yaml",
    "exchanger/compare.yaml",
    "exchanger/bench.yaml",
    "lifting/lifting.yaml",
    "lifting/lifting_contest.yaml",
    "lifting/lifting_double_check.yaml",
]


def write_config(tmp_path, doc):
    p = tmp_path / "scenario.yaml"
    p.write_text(yaml.safe_dump(doc))
    return p


class TestLoadConfig:
    def test_all_shipped_configs_load(self, scenarios_dir):
        for rel in ALL_SCENARIOS:
            cfg = load_config(scenarios_dir / rel)
            assert isinstance(cfg, ScenarioConfig)

    def test_seed_override(self, scenarios_dir):
        cfg = load_config(scenarios_dir / "exchanger/compare.yaml", seed_override=99)
        assert cfg.seed == 99

    def test_unknown_mode_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="mode"):
            load_config(write_config(tmp_path, {"mode": "quantum"}))

    def test_non_mapping_document_rejected(self, tmp_path):
        p = tmp_path / "scenario.yaml"
        p.write_text("- just\n- a list\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(p)

    def test_nonpositive_duration_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="duration"):
            load_config(write_config(tmp_path, {"mode": "exchanger_agent", "duration": 0}))

    def test_missing_document_reference(self, tmp_path):
        doc = {"mode": "exchanger_agent", "documents": {}}
        with pytest.raises(ConfigError, match="plan_library"):
            load_config(write_config(tmp_path, doc))

    def test_dangling_document_path(self, tmp_path):
        doc = {"mode": "exchanger_agent",
               "documents": {"plan_library": "nope.yaml", "rulebase": "nope.yaml"}}
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(write_config(tmp_path, doc))


class TestReplayDeterminism:
    @pytest.mark.parametrize("rel", ALL_SCENARIOS)
    def test_same_config_same_bytes(self, rel, scenarios_dir, tmp_path):
        cfg = load_config(scenarios_dir / rel)
        run(cfg, out_dir=tmp_path / "a")
        run(cfg, out_dir=tmp_path / "b")
        files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert files_a == sorted(p.name for p in (tmp_path / "b").iterdir())
        for name in files_a:
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes(), name


class TestMetricsRecompute:
    @pytest.fixture(scope="class")
    @staticmethod
    def compare_run(scenarios_dir, tmp_path_factory):
        out = tmp_path_factory.mktemp("compare")
        cfg = load_config(scenarios_dir / "exchanger/compare.yaml")
        results = run(cfg, out_dir=out)
        return cfg, results, out

    def test_latencies_match_stored_metrics(self, compare_run):
        cfg, results, out = compare_run
        for paradigm in ("agent", "sfc"):
            records = list(read_trace(out / f"{paradigm}.ndjson"))
            recomputed = compute_exchanger_metrics(
                records, dt=cfg.plant_params.tick_dt,
                T_abnormal=cfg.plant_params.T_abnormal,
                setpoint=cfg.plant_params.T_setpoint, band=cfg.settle_band)
            assert recomputed["latencies"] == results[paradigm]["latencies"]
            assert recomputed["time_above_threshold"] == \
                results[paradigm]["time_above_threshold"]

    def test_agent_reacts_within_one_tick(self, compare_run):
        _, results, _ = compare_run
        for entry in results["agent"]["latencies"]:
            assert entry["latency"] is not None
            assert entry["latency"] <= results["agent"].get("dt", 0.1) + 1e-9

    def test_safety_block_present(self, compare_run):
        _, results, _ = compare_run
        assert results["safety"]["agent_not_worse"] is True

    def test_invariant_checks_pass(self, compare_run):
        _, results, _ = compare_run
        assert all(c["ok"] for c in results["checks"])

    def test_latency_helper_orders_by_record_position(self):
        recs = [
            {"tick": 0, "seq": 0, "clock": 0.0, "source": "plant",
             "kind": "percept", "payload": {"injection": "compressor_stop"}},
            {"tick": 0, "seq": 1, "clock": 0.0, "source": "stabiliser",
             "kind": "action", "payload": {}},
            {"tick": 3, "seq": 0, "clock": 0.3, "source": "agent:protector",
             "kind": "action", "payload": {}},
        ]
        lat = reaction_latencies(recs)
        assert lat == [{"injection": "compressor_stop", "at": 0.0, "latency": 0.3}]


class TestBench:
    def test_bench_statistics_shape(self, scenarios_dir):
        cfg = load_config(scenarios_dir / "exchanger/bench.yaml")
        out = bench_latency(cfg, 20)
        assert out["trials"] == 20
        for paradigm in ("agent", "sfc"):
            stats = out[paradigm]
            assert set(stats) >= {"min", "mean", "max", "stddev"}
            assert 0.0 <= stats["min"] <= stats["mean"] <= stats["max"]

    def test_bench_seeded_reproducibility(self, scenarios_dir):
        cfg = load_config(scenarios_dir / "exchanger/bench.yaml")
        a = bench_latency(cfg, 10)
        b = bench_latency(cfg, 10)
        a.pop("wall_clock_s"), b.pop("wall_clock_s")
        assert a == b

    def test_bench_requires_compare_mode(self, scenarios_dir):
        cfg = load_config(scenarios_dir / "exchanger/agent.yaml")
        with pytest.raises(ConfigError):
            bench_latency(cfg, 1)


class TestCli:
    def test_run_writes_trace_and_metrics(self, scenarios_dir, tmp_path, capsys):
        rc = cli.main(["run", "--config", str(scenarios_dir / "exchanger/agent.yaml"),
                       "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "trace.ndjson").exists()
        assert (tmp_path / "metrics.json").exists()
        printed = json.loads(capsys.readouterr().out)
        assert printed["mode"] == "exchanger_agent"

    def test_verify_trace_accepts_own_output(self, scenarios_dir, tmp_path, capsys):
        cli.main(["run", "--config", str(scenarios_dir / "exchanger/compare.yaml"),
                  "--out", str(tmp_path)])
        capsys.readouterr()
        rc = cli.main(["verify-trace", str(tmp_path / "agent.ndjson"),
                       "--metrics", str(tmp_path / "metrics.json"),
                       "--paradigm", "agent"])
        assert rc == 0
        assert capsys.readouterr().out.startswith("OK")

    def test_verify_trace_flags_tampering(self, scenarios_dir, tmp_path, capsys):
        cli.main(["run", "--config", str(scenarios_dir / "exchanger/compare.yaml"),
                  "--out", str(tmp_path)])
        capsys.readouterr()
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        metrics["sfc"]["time_above_threshold"] += 1.0
        (tmp_path / "metrics.json").write_text(json.dumps(metrics))
        rc = cli.main(["verify-trace", str(tmp_path / "sfc.ndjson"),
                       "--metrics", str(tmp_path / "metrics.json"),
                       "--paradigm", "sfc"])
        assert rc == 1
        assert "time_above_threshold" in capsys.readouterr().out

    def test_diff_trace_identical_and_divergent(self, scenarios_dir, tmp_path, capsys):
        cli.main(["run", "--config", str(scenarios_dir / "exchanger/agent.yaml"),
                  "--out", str(tmp_path / "a")])
        cli.main(["run", "--config", str(scenarios_dir / "exchanger/agent.yaml"),
                  "--out", str(tmp_path / "b")])
        capsys.readouterr()
        assert cli.main(["diff-trace", str(tmp_path / "a/trace.ndjson"),
                         str(tmp_path / "b/trace.ndjson")]) == 0
        lines = (tmp_path / "b/trace.ndjson").read_text().splitlines()
        lines[5] = lines[5].replace(":", ":", 1)[:-1] + "}" if lines[5].endswith("}") else lines[5]
        record = json.loads(lines[5])
        record["payload"] = {"tampered": True}
        lines[5] = json.dumps(record)
        (tmp_path / "b/trace.ndjson").write_text("\n".join(lines) + "\n")
        assert cli.main(["diff-trace", str(tmp_path / "a/trace.ndjson"),
                         str(tmp_path / "b/trace.ndjson")]) == 1

    def test_bench_subcommand(self, scenarios_dir, tmp_path, capsys):
        rc = cli.main(["bench", "--config", str(scenarios_dir / "exchanger/bench.yaml"),
                       "--trials", "5", "--out", str(tmp_path)])
        assert rc == 0
        doc = json.loads((tmp_path / "bench.json").read_text())
        assert doc["trials"] == 5


class TestHttpService:
    @pytest.fixture
    def handle(self, scenarios_dir):
        from plantmas.service import serve

        cfg = load_config(scenarios_dir / "lifting/lifting.yaml")
        handle = serve(cfg, port=0, tick_interval=0.01)
        yield handle
        handle.shutdown()

    def get(self, handle, path):
        with urllib.request.urlopen(f"http://127.0.0.1:{handle.port}{path}") as resp:
            return json.loads(resp.read())

    def post(self, handle, path, doc):
        req = urllib.request.Request(
            f"http://127.0.0.1:{handle.port}{path}",
            data=json.dumps(doc).encode(),
            headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())

    def wait_for(self, predicate, timeout=5.0):
        deadline = time.time() + timeout
        while time.time() < deadline:
            value = predicate()
            if value:
                return value
            time.sleep(0.02)
        raise AssertionError("timed out waiting for service state")

    def test_decisions_drive_workflow_to_achievement(self, handle):
        answered = set()
        deadline = time.time() + 10.0
        while time.time() < deadline:
            if self.get(handle, "/api/snapshot")["done"]:
                break
            for ask in self.get(handle, "/api/proposals/pending")["proposals"]:
                key = (ask["id"], ask["awaiting"])
                if key in answered:
                    continue
                status, _ = self.post(handle, "/api/decisions", {
                    "proposal_id": ask["id"], "actor": ask["awaiting"],
                    "verdict": "accept"})
                assert status == 202
                answered.add(key)
            time.sleep(0.02)
        snap = self.wait_for(
            lambda: (s := self.get(handle, "/api/snapshot"))["done"] and s)
        assert snap["root_status"] == "achieved"
        assert ("P-1", "engineer") in answered and ("P-1", "operator") in answered

    def test_invalid_decision_is_400(self, handle):
        self.wait_for(lambda: self.get(handle, "/api/proposals/pending")["proposals"])
        with pytest.raises(urllib.error.HTTPError) as exc:
            self.post(handle, "/api/decisions",
                      {"proposal_id": "P-1", "actor": "janitor", "verdict": "accept"})
        assert exc.value.code == 400

    def test_chat_accept_and_status(self, handle):
        pending = self.wait_for(
            lambda: self.get(handle, "/api/proposals/pending")["proposals"])
        status, body = self.post(handle, "/api/chat", {
            "actor": pending[0]["awaiting"],
            "command": f"accept {pending[0]['id']}"})
        assert status == 200
        status, body = self.post(handle, "/api/chat",
                                 {"actor": "operator", "command": "status"})
        assert body["kind"] == "status"
        status, body = self.post(handle, "/api/chat",
                                 {"actor": "operator", "command": "what?"})
        assert body["kind"] == "help"

    def test_event_stream_replays_from_since(self, handle):
        self.wait_for(lambda: self.get(handle, "/api/snapshot")["last_seq"] >= 5)
        req = urllib.request.Request(
            f"http://127.0.0.1:{handle.port}/api/events?since=0",
            headers={"Accept": "text/event-stream"})
        ids = []
        with urllib.request.urlopen(req, timeout=5) as resp:
            assert resp.headers["Content-Type"].startswith("text/event-stream")
            for raw in resp:
                line = raw.decode().strip()
                if line.startswith("id:"):
                    ids.append(int(line.split(":", 1)[1]))
                if len(ids) >= 5:
                    break
        assert ids == sorted(ids)
        assert len(set(ids)) == len(ids)

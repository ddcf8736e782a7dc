"""End-to-end acceptance checks.

Each test prints a single PASS/FAIL line for its criterion (visible with
``pytest -rA`` or ``-s``); under ``pytest -v`` the per-test verdict itself is
the one-line report.  These tests exercise the shipped scenario documents and
independent oracles; tolerances are stated inline.
"""

import hashlib
import json
import random
import time
from dataclasses import replace

import numpy as np
import pytest

from plantmas import fuzzy, org
from plantmas.harness import bench_latency, build_lifting_config, load_config, run, run_exchanger
from plantmas.plant import Injection
from plantmas.trace import Trace
from plantmas.workflow import ApprovalDecision, LiftingRuntime


def report(name: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f" [{detail}]"
    print(line)
    assert ok, line


def agent_records(cfg, injections, duration):
    trace = Trace()
    run_exchanger(replace(cfg, injections=injections, duration=duration), "agent", trace)
    return [{"tick": r.tick, "seq": r.seq, "clock": r.clock, "source": r.source,
             "kind": r.kind, "payload": r.payload} for r in trace.records]


class TestReactionLatencyBench:
    def test_event_driven_reacts_within_tick_polled_half_period(self, scenarios_dir):
        """1000 seeded trials: agent latency 0; chart mean near half its period."""
        cfg = load_config(scenarios_dir / "exchanger/bench.yaml", seed_override=42)
        t0 = time.perf_counter()
        out = bench_latency(cfg, 1000)
        wall = time.perf_counter() - t0
        agent, sfc = out["agent"], out["sfc"]
        ok = (agent["mean"] == 0.0 and agent["max"] == 0.0
              and 2.35 <= sfc["mean"] <= 2.65
              and sfc["max"] <= 5.0 and sfc["min"] >= 0.0
              and wall < 10.0)
        report("reaction-latency benchmark (1000 trials, seed 42)", ok,
               f"agent mean={agent['mean']} max={agent['max']}, "
               f"sfc mean={sfc['mean']:.4f} max={sfc['max']}, wall={wall:.2f}s")


class TestOverridePreemption:
    def test_override_runs_alone_until_done(self, scenarios_dir):
        """500 seeded runs with a spike landing mid-plan: between the override
        event being dequeued and its intention completing, no non-protected
        intention executes a step."""
        cfg = load_config(scenarios_dir / "exchanger/agent.yaml")
        rng = random.Random(42)
        violations = 0
        checked = 0
        for _ in range(500):
            stop_at = round(rng.uniform(1.0, 5.0), 1)
            spike_at = round(stop_at + rng.uniform(0.2, 0.8), 1)
            recs = agent_records(cfg, [
                Injection(kind="compressor_stop", at=stop_at),
                Injection(kind="abnormal_spike", at=spike_at,
                          duration=2.0, magnitude=20.0),
            ], duration=spike_at + 3.0)
            start = next((i for i, r in enumerate(recs)
                          if r["kind"] == "event"
                          and r["payload"].get("priority") == "override"), None)
            assert start is not None, "override event never dequeued"
            override_id = next(r["payload"]["intention"] for r in recs[start:]
                               if r["kind"] == "intention-step"
                               and r["payload"].get("plan") == "emergencyOverride")
            end = next(i for i, r in enumerate(recs)
                       if i > start and r["kind"] == "event"
                       and r["payload"].get("intention_done") == override_id)
            checked += 1
            for r in recs[start:end]:
                if r["kind"] == "intention-step" and not r["payload"]["protected"]:
                    violations += 1
                    break
        report("override preemption (500 seeded spike-mid-plan runs)",
               checked == 500 and violations == 0,
               f"checked={checked}, violations={violations}")


class TestSafetyComparison:
    def test_agent_never_worse_mostly_strictly_better(self, scenarios_dir):
        """100 seeded stop-transient scenarios: time above the alarm threshold
        under the event-driven controller is <= the polled chart in every
        scenario, and strictly lower in at least 90."""
        base = load_config(scenarios_dir / "exchanger/compare.yaml")
        rng = random.Random(42)
        worse, strict = 0, 0
        for _ in range(100):
            spike_at = round(rng.randrange(100, 300) * base.plant_params.tick_dt, 1)
            cfg = replace(base, duration=120.0, injections=[
                Injection(kind="abnormal_spike", at=spike_at,
                          duration=20.0, magnitude=20.0),
                Injection(kind="compressor_stop", at=90.0),
            ])
            m_agent = run_exchanger(cfg, "agent", Trace())
            m_sfc = run_exchanger(cfg, "sfc", Trace())
            if m_agent["time_above_threshold"] > m_sfc["time_above_threshold"]:
                worse += 1
            elif m_agent["time_above_threshold"] < m_sfc["time_above_threshold"]:
                strict += 1
        report("safety comparison (100 seeded transients)",
               worse == 0 and strict >= 90,
               f"worse={worse}, strictly_better={strict}")


class TestStabiliser:
    def test_settles_within_300s_and_stays(self, scenarios_dir):
        cfg = load_config(scenarios_dir / "exchanger/agent.yaml")
        metrics = run_exchanger(cfg, "agent", Trace())
        settling = metrics["settling_time"]
        ok = settling is not None and settling <= 300.0
        report("stabiliser settling (|T-setpoint| <= 1 within 300 s, held)",
               ok, f"settling_time={settling}, final_T={metrics['final_T']}")

    def test_centroid_matches_quadrature_oracle(self):
        """Exact centroid vs a 10^6-sample trapezoid quadrature on 1000
        randomized rule activations; relative error <= 1e-6."""
        rb = fuzzy.default_rulebase()
        xs = np.linspace(rb.output.lo, rb.output.hi, 1_000_001)
        span = rb.output.hi - rb.output.lo
        tri_grid = {}
        for _label, tri in rb.output.terms:
            tri_grid[(tri.a, tri.b, tri.c)] = np.array(
                [tri.degree(float(x)) for x in xs])
        rng = random.Random(2026)
        worst = 0.0
        compared = 0
        for _ in range(1000):
            e = rng.uniform(-12.0, 12.0)
            de = rng.uniform(-1.2, 1.2)
            agg = fuzzy.infer(rb, e, de)
            if not agg.clipped:
                continue
            mem = np.zeros_like(xs)
            for tri, h in agg.clipped:
                np.maximum(mem, np.minimum(h, tri_grid[(tri.a, tri.b, tri.c)]),
                           out=mem)
            den = np.trapezoid(mem, xs)
            if den <= 0.0:
                continue
            oracle = np.trapezoid(mem * xs, xs) / den
            exact = fuzzy.defuzzify_centroid(agg)
            rel = abs(exact - oracle) / max(abs(oracle), span)
            worst = max(worst, rel)
            compared += 1
        report("centroid vs 10^6-sample quadrature (1000 activations, <=1e-6)",
               compared >= 900 and worst <= 1e-6,
               f"compared={compared}, worst_rel_err={worst:.2e}")


def _strip(rec) -> str:
    payload = rec.payload
    if rec.kind in ("artifact-call", "artifact-result") \
            and payload.get("entity") == "agency":
        # the submitted report quotes every decision, so the inserted goal's
        # final-check accept legitimately appears inside it; the chain itself
        # is compared separately below
        payload = json.loads(json.dumps(payload))
        for container in (payload.get("payload") or {},):
            if "report" in container:
                container["report"].pop("approval_chain", None)
            container.pop("body_hash", None)
    return json.dumps({"source": rec.source, "kind": rec.kind,
                       "payload": payload}, sort_keys=True)


def _mentions_double_check(rec) -> bool:
    s = json.dumps(rec.payload, sort_keys=True)
    return any(key in s for key in
               ("double_check", "final_check", "finalCheck", "doubleCheck"))


def _extra_indices(records) -> list:
    """Records about the inserted goal, including completion events of the
    intentions its plans spawned (those payloads only carry intention ids)."""
    idx = {i for i, r in enumerate(records) if _mentions_double_check(r)}
    own_intentions = {(r.source, r.payload["intention"]) for i, r in enumerate(records)
                      if i in idx and r.kind == "intention-step"}
    for i, r in enumerate(records):
        if r.kind == "event" and "intention_done" in r.payload \
                and (r.source, r.payload["intention_done"]) in own_intentions:
            idx.add(i)
    return sorted(idx)


class TestSchemeFlexibility:
    def test_inserted_goal_changes_only_scheme_and_trace_window(self, scenarios_dir):
        """Adding one goal to the scheme document must leave every plan
        library byte-identical and add exactly one contiguous block of
        records (all about that goal) to the trace."""
        lib_files = sorted((scenarios_dir / "lifting").glob("*.yaml"))
        lib_files = [p for p in lib_files if p.name not in
                     ("scheme.yaml", "scheme_double_check.yaml",
                      "lifting.yaml", "lifting_double_check.yaml",
                      "lifting_contest.yaml")]
        before = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in lib_files}

        def run_lifting(name):
            cfg = load_config(scenarios_dir / "lifting" / name)
            trace = Trace()
            rt = LiftingRuntime(build_lifting_config(cfg), trace)
            m = rt.run()
            return m, trace.records

        m_base, recs_base = run_lifting("lifting.yaml")
        m_dc, recs_dc = run_lifting("lifting_double_check.yaml")
        after = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in lib_files}

        extra_idx = _extra_indices(recs_dc)
        residual = [_strip(r) for i, r in enumerate(recs_dc) if i not in set(extra_idx)]
        base = [_strip(r) for r in recs_base]
        contiguous = extra_idx == list(range(extra_idx[0], extra_idx[-1] + 1)) \
            if extra_idx else False

        def chain(records):
            for r in records:
                if r.kind == "artifact-call" and r.payload.get("entity") == "agency":
                    return r.payload["payload"]["report"]["approval_chain"]
            return None

        chain_base, chain_dc = chain(recs_base), chain(recs_dc)
        chain_ok = (chain_dc is not None
                    and chain_dc[:len(chain_base)] == chain_base
                    and len(chain_dc) == len(chain_base) + 1
                    and chain_dc[-1]["actor"] == "engineer"
                    and chain_dc[-1]["verdict"] == "accept")
        ok = (before == after
              and m_base["outcome"] == m_dc["outcome"] == org.ACHIEVED
              and bool(extra_idx)
              and contiguous
              and residual == base
              and chain_ok)
        report("scheme flexibility (insert goal: docs-only change, contiguous trace delta)",
               ok, f"extra_records={len(extra_idx)}, contiguous={contiguous}, "
                   f"residual_equal={residual == base}, libs_unchanged={before == after}, "
                   f"chain_ok={chain_ok}")


class TestApprovalProtocol:
    def test_all_accept_walkthrough(self, scenarios_dir):
        cfg = load_config(scenarios_dir / "lifting/lifting.yaml")
        rt = LiftingRuntime(build_lifting_config(cfg), Trace())
        m = rt.run()
        order = ["stage_i_acquire_reservoir_data", "stage_ii_build_model",
                 "stage_iii_optimise_parameters", "stage_iv_apply_setup",
                 "stage_v_report_agency"]
        achieved = [m["stage_timings"].get(g, {}).get("achieved") for g in order]
        ok = (m["outcome"] == org.ACHIEVED
              and m["rounds"] == 1
              and m["optimizer_invocations"] == 1
              and m["receipt"] is not None
              and all(t is not None for t in achieved)
              and achieved == sorted(achieved))
        report("approval protocol, all-accept (stages in order, 1 round, 1 receipt)",
               ok, f"outcome={m['outcome']}, rounds={m['rounds']}, "
                   f"optimizer_calls={m['optimizer_invocations']}")

    def test_contest_once_walkthrough(self, scenarios_dir):
        cfg = load_config(scenarios_dir / "lifting/lifting_contest.yaml")
        rt = LiftingRuntime(build_lifting_config(cfg), Trace())
        m = rt.run()
        calls = [r for r in rt.trace.records
                 if r.kind == "artifact-call"
                 and r.payload.get("entity") == "optimizer_artifact"]
        round2_box = calls[1].payload["payload"]["constraints"] if len(calls) > 1 else {}
        pinned = round2_box.get("injection_rate") == {"lo": 120.0, "hi": 120.0}
        ok = (m["outcome"] == org.ACHIEVED
              and m["optimizer_invocations"] == 2
              and pinned)
        report("approval protocol, contest-once (2 optimizer calls, adjusted round-2 box)",
               ok, f"optimizer_calls={m['optimizer_invocations']}, "
                   f"round2_injection_rate={round2_box.get('injection_rate')}")


class TestReplayDeterminism:
    def test_every_shipped_scenario_replays_byte_identically(self, scenarios_dir, tmp_path):
        scenarios = ["exchanger/agent.yaml", "exchanger/sfc.yaml",
                     "exchanger/compare.yaml", "exchanger/bench.yaml",
                     "lifting/lifting.yaml", "lifting/lifting_contest.yaml",
                     "lifting/lifting_double_check.yaml"]
        mismatches = []
        for rel in scenarios:
            cfg = load_config(scenarios_dir / rel)
            tag = rel.replace("/", "_")
            run(cfg, out_dir=tmp_path / tag / "a")
            run(cfg, out_dir=tmp_path / tag / "b")
            for f in sorted((tmp_path / tag / "a").iterdir()):
                if f.read_bytes() != (tmp_path / tag / "b" / f.name).read_bytes():
                    mismatches.append(f"{rel}:{f.name}")
        report("replay determinism (all shipped scenarios, byte-identical)",
               not mismatches, f"mismatches={mismatches or 'none'}")


class TestApprovalGateInvariant:
    def test_no_setup_applied_without_both_approvals(self, scenarios_dir):
        """500 randomized approver policies: every control-system invocation
        is preceded by an engineer accept AND an operator accept for the same
        proposal id."""
        base_cfg = load_config(scenarios_dir / "lifting/lifting.yaml")
        violations = []
        applied_runs = 0
        for seed in range(500):
            rng = random.Random(seed)

            def approver(actor, proposal, phase):
                if rng.random() < 0.6:
                    return ApprovalDecision(proposal.id, actor, "accept")
                adjustments = {}
                if rng.random() < 0.7:
                    adjustments["injection_rate"] = round(rng.uniform(60.0, 180.0), 1)
                note = "" if adjustments else "needs another look"
                return ApprovalDecision(proposal.id, actor, "contest",
                                        adjustments=adjustments, note=note)

            rt = LiftingRuntime(build_lifting_config(base_cfg, approver=approver),
                                Trace())
            rt.run()
            recs = rt.trace.records
            for i, r in enumerate(recs):
                if r.kind != "artifact-call" or r.payload.get("entity") != "control_system":
                    continue
                applied_runs += 1
                prior = [p.payload for p in recs[:i] if p.kind == "decision"]
                eng_ok = {p["proposal_id"] for p in prior
                          if p["actor"] == "engineer" and p["verdict"] == "accept"}
                op_ok = {p["proposal_id"] for p in prior
                         if p["actor"] == "operator" and p["verdict"] == "accept"}
                if not (eng_ok & op_ok):
                    violations.append(seed)
        report("approval gate invariant (500-seed fuzz: no setup without both accepts)",
               not violations and applied_runs > 0,
               f"setup_invocations={applied_runs}, violating_seeds={violations or 'none'}")

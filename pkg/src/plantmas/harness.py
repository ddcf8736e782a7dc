"""Scenario harness: deterministic runs, traces, metrics, and the latency bench.

A scenario config is one YAML file referencing the other documents by
relative path.  Modes: ``exchanger_agent``, ``exchanger_sfc``,
``exchanger_compare`` (both paradigms on the same scenario), ``lifting``.
Every run is deterministic given the config and seed, and the emitted trace
replays byte-identically.
"""

from __future__ import annotations

import math
import random
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from functools import lru_cache

from . import plant as plant_mod
from . import sfc as sfc_mod
from .agent import Agent
from .fuzzy import RuleBase, control_step, load_rulebase
from .planlib import load_plan_library
from .plant import Injection, PlantParams, SensorReader, alarm_active
from .trace import Trace, TraceRecord
from .workflow import LiftingConfig, LiftingRuntime, QueueApprover, ScriptedApprover

MODES = ("exchanger_agent", "exchanger_sfc", "exchanger_compare", "lifting")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    mode: str
    base_dir: Path
    seed: int = 0
    duration: float = 300.0
    polling_period: float = 5.0
    settle_band: float = 1.0
    initial_T: Optional[float] = None
    initial_valve: float = 0.8
    plant_params: PlantParams = field(default_factory=PlantParams)
    injections: list = field(default_factory=list)
    documents: dict = field(default_factory=dict)
    max_rounds: int = 5
    max_ticks: int = 2000
    approval_remind_ticks: Optional[int] = None
    approval_abort_ticks: Optional[int] = None

    def doc_path(self, key: str) -> Path:
        try:
            rel = self.documents[key]
        except KeyError:
            raise ConfigError(f"config missing document reference {key!r}") from None
        path = (self.base_dir / rel).resolve()
        if not path.exists():
            raise ConfigError(f"referenced document does not exist: {path}")
        return path

    def plan_library_paths(self) -> dict:
        libs = self.documents.get("plan_libraries")
        if not isinstance(libs, dict):
            raise ConfigError("lifting config needs documents.plan_libraries mapping")
        out = {}
        for name, rel in libs.items():
            path = (self.base_dir / rel).resolve()
            if not path.exists():
                raise ConfigError(f"plan library does not exist: {path}")
            out[name] = path
        return out


def load_config(path: str | Path, seed_override: Optional[int] = None) -> ScenarioConfig:
    path = Path(path).resolve()
    with open(path) as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping document")
    mode = doc.get("mode")
    if mode not in MODES:
        raise ConfigError(f"{path}: mode must be one of {MODES}, got {mode!r}")
    duration = float(doc.get("duration", 300.0))
    if duration <= 0:
        raise ConfigError(f"{path}: duration must be > 0")
    params = PlantParams(**(doc.get("plant") or {}))
    injections = [
        Injection(
            kind=i["kind"], at=float(i["at"]),
            duration=float(i.get("duration", 0.0)),
            magnitude=float(i.get("magnitude", 0.0)),
        )
        for i in doc.get("injections", []) or []
    ]
    initial = doc.get("initial") or {}
    cfg = ScenarioConfig(
        mode=mode,
        base_dir=path.parent,
        seed=int(seed_override if seed_override is not None else doc.get("seed", 0)),
        duration=duration,
        polling_period=float(doc.get("polling_period", 5.0)),
        settle_band=float(doc.get("settle_band", 1.0)),
        initial_T=initial.get("T0"),
        initial_valve=float(initial.get("valve0", 0.8)),
        plant_params=params,
        injections=injections,
        documents=doc.get("documents") or {},
        max_rounds=int(doc.get("max_rounds", 5)),
        max_ticks=int(doc.get("max_ticks", 2000)),
        approval_remind_ticks=doc.get("approval_remind_ticks"),
        approval_abort_ticks=doc.get("approval_abort_ticks"),
    )
    # fail fast on missing documents
    if mode in ("exchanger_agent", "exchanger_compare"):
        cfg.doc_path("plan_library"), cfg.doc_path("rulebase")
    if mode in ("exchanger_sfc", "exchanger_compare"):
        cfg.doc_path("chart"), cfg.doc_path("rulebase")
    if mode == "lifting":
        cfg.doc_path("scheme"), cfg.doc_path("reservoir")
        cfg.doc_path("constraints"), cfg.doc_path("approver")
        cfg.plan_library_paths()
    return cfg


# ---------------------------------------------------------------------------
# heat-exchanger runs

# The exchanger documents are immutable during a process, and the bench
# re-reads them thousands of times; parse once per path.


@lru_cache(maxsize=None)
def _cached_rulebase(path: str) -> RuleBase:
    return load_rulebase(path)


@lru_cache(maxsize=None)
def _cached_chart(path: str) -> sfc_mod.SfcChart:
    return sfc_mod.load_chart_file(path)


@lru_cache(maxsize=None)
def _cached_plan_library(path: str) -> dict:
    return load_plan_library(path)


def _fresh_agent(path: Path, trace_fn) -> Agent:
    parts = _cached_plan_library(str(path))
    return Agent(
        parts["agent"],
        plans=parts["plans"],
        beliefs=parts["beliefs"],
        override_events=parts["override_events"],
        trace=trace_fn,
    )


class _Stabiliser:
    """Shared fuzzy temperature stabiliser; the paradigms differ only in how
    often it is allowed to act (every tick vs. every polling boundary)."""

    def __init__(self, rulebase: RuleBase, setpoint: float):
        self.rulebase = rulebase
        self.setpoint = setpoint
        self.engaged = False
        self.u_cmd = 0.0
        self.T_prev = 0.0
        self.just_engaged = False

    def engage(self, T: float, u: float) -> None:
        self.engaged = True
        self.u_cmd = u
        self.T_prev = T
        self.just_engaged = True

    def disengage(self) -> None:
        self.engaged = False

    def step(self, T: float, dt_ctrl: float) -> Optional[float]:
        if not self.engaged:
            return None
        if self.just_engaged:
            self.just_engaged = False
            self.T_prev = T
            return None
        du = control_step(T, self.T_prev, self.setpoint, self.rulebase, dt_ctrl)
        self.T_prev = T
        self.u_cmd = min(1.0, max(0.0, self.u_cmd + du))
        return self.u_cmd


def run_exchanger(cfg: ScenarioConfig, paradigm: str, trace: Trace,
                  first_reaction_only: bool = False) -> dict:
    """Drive one paradigm (``agent`` or ``sfc``) against the plant scenario.

    With ``first_reaction_only`` the run ends right after the controller's
    first action, which is all the latency bench needs.
    """
    params = cfg.plant_params
    dt = params.tick_dt
    n_ticks = int(round(cfg.duration / dt))
    state = plant_mod.make_state(params, T0=cfg.initial_T, valve0=cfg.initial_valve)
    for inj in cfg.injections:
        plant_mod.inject(state, replace(inj))
    rulebase = _cached_rulebase(str(cfg.doc_path("rulebase")))
    stab = _Stabiliser(rulebase, params.T_setpoint)

    if paradigm == "agent":
        agent = _fresh_agent(cfg.doc_path("plan_library"), trace.hook("agent:protector"))
        agent.actuators["valve"] = lambda ag, term: plant_mod.actuate_valve(state, float(term.args[0]))
        agent.actuators["engage_stabiliser"] = lambda ag, term: stab.engage(state.T, state.valve_flow)
        agent.actuators["disengage_stabiliser"] = lambda ag, term: stab.disengage()
        sensors = SensorReader()
        # seed the pre-run situation as beliefs, not as reaction events
        for polarity, belief in sensors.read(state, params):
            if polarity == "+":
                agent.beliefs.setdefault(belief, None)
    else:
        chart = _cached_chart(str(cfg.doc_path("chart")))
        chart = sfc_mod.SfcChart(chart.steps, chart.transitions, chart.initial_step,
                                 cfg.polling_period, chart.variables)
        chart_state = sfc_mod.initial_state(chart)

    def dispatch(term) -> None:
        if term.functor == "valve":
            plant_mod.actuate_valve(state, float(term.args[0]))
        elif term.functor == "engage_stabiliser":
            stab.engage(state.T, state.valve_flow)
        elif term.functor == "disengage_stabiliser":
            stab.disengage()

    for k in range(n_ticks):
        clock = round(k * dt, 9)
        trace.set_time(k, clock)

        for inj in plant_mod.apply_due_injections(state, params):
            trace.add("plant", "percept", {
                "injection": inj.kind, "at": inj.at,
                "duration": inj.duration, "magnitude": inj.magnitude,
            })

        boundary = sfc_mod.is_boundary(clock, cfg.polling_period)
        reacted = False
        if paradigm == "agent":
            delta = sensors.read(state, params)
            reacted = bool(agent.reasoning_cycle(delta, k))
        elif boundary:
            snap = plant_mod.snapshot(state, params, cfg.settle_band)
            trace.add("sfc", "poll", {"step": chart_state.active_step})
            for action in sfc_mod.poll_tick(chart, chart_state, snap, clock):
                trace.add("sfc", "action", {"action": str(action)})
                dispatch(action)
                reacted = True

        # hardware-style interlock: an active alarm trips the fine regulator
        # in both paradigms so the protection layer owns the valve
        if alarm_active(state, params):
            stab.disengage()
        if paradigm == "agent" or boundary:
            cmd = stab.step(state.T, dt if paradigm == "agent" else cfg.polling_period)
            if cmd is not None:
                plant_mod.actuate_valve(state, cmd)
                trace.add("stabiliser", "action", {"action": f"valve({cmd:.6f})"})

        trace.add("plant", "plant", {
            "T": round(state.T, 9), "u": round(state.valve_flow, 9),
            "compressor": state.compressor,
            "alarm": alarm_active(state, params),
            "cond_op": state.cond_op,
        })
        plant_mod.step(state, params)
        if first_reaction_only and reacted:
            break

    metrics = compute_exchanger_metrics(
        [r for r in trace.records], params.tick_dt, params.T_abnormal,
        params.T_setpoint, cfg.settle_band,
    )
    metrics["paradigm"] = paradigm
    metrics["plant_faults"] = list(state.faults)
    return metrics


def _controller_source(rec: TraceRecord | dict) -> bool:
    source = rec["source"] if isinstance(rec, dict) else rec.source
    return source == "sfc" or source.startswith("agent:")


def _as_dicts(records) -> list[dict]:
    out = []
    for r in records:
        if isinstance(r, dict):
            out.append(r)
        else:
            out.append({"tick": r.tick, "seq": r.seq, "clock": r.clock,
                        "source": r.source, "kind": r.kind, "payload": r.payload})
    return out


def reaction_latencies(records) -> list[dict]:
    """Per injected event: delay until the controller's first action.

    Computed from the trace alone; the ``verify-trace`` subcommand recomputes
    these figures and compares them with the stored metrics document.
    """
    recs = _as_dicts(records)
    injections = [r for r in recs if r["kind"] == "percept" and r["source"] == "plant"]
    actions = [r for r in recs if r["kind"] == "action" and _controller_source(r)]
    out = []
    for inj in injections:
        after = [a for a in actions if (a["tick"], a["seq"]) > (inj["tick"], inj["seq"])]
        latency = round(after[0]["clock"] - inj["clock"], 9) if after else None
        out.append({
            "injection": inj["payload"]["injection"],
            "at": inj["clock"],
            "latency": latency,
        })
    return out


def compute_exchanger_metrics(records, dt: float, T_abnormal: float,
                              setpoint: float, band: float) -> dict:
    recs = _as_dicts(records)
    plant_recs = [r for r in recs if r["kind"] == "plant"]
    time_above = dt * sum(1 for r in plant_recs if r["payload"]["T"] >= T_abnormal)
    settling = None
    for i, r in enumerate(plant_recs):
        if abs(r["payload"]["T"] - setpoint) > band:
            settling = None
        elif settling is None:
            settling = r["clock"]
    return {
        "latencies": reaction_latencies(recs),
        "time_above_threshold": round(time_above, 9),
        "settling_time": settling,
        "final_T": plant_recs[-1]["payload"]["T"] if plant_recs else None,
    }


# ---------------------------------------------------------------------------
# top-level run / bench


def run(cfg: ScenarioConfig, out_dir: Optional[str | Path] = None) -> dict:
    """Full deterministic run; writes trace file(s) and a metrics document."""
    results: dict = {"mode": cfg.mode, "seed": cfg.seed}
    traces: dict[str, Trace] = {}

    if cfg.mode in ("exchanger_agent", "exchanger_compare"):
        trace = Trace()
        results["agent"] = run_exchanger(cfg, "agent", trace)
        traces["agent" if cfg.mode == "exchanger_compare" else "trace"] = trace
    if cfg.mode in ("exchanger_sfc", "exchanger_compare"):
        trace = Trace()
        results["sfc"] = run_exchanger(cfg, "sfc", trace)
        traces["sfc" if cfg.mode == "exchanger_compare" else "trace"] = trace
    if cfg.mode == "exchanger_compare":
        results["safety"] = {
            "time_above_agent": results["agent"]["time_above_threshold"],
            "time_above_sfc": results["sfc"]["time_above_threshold"],
            "agent_not_worse": results["agent"]["time_above_threshold"]
                               <= results["sfc"]["time_above_threshold"],
        }
    if cfg.mode == "lifting":
        trace = Trace()
        runtime = LiftingRuntime(build_lifting_config(cfg), trace)
        results["lifting"] = runtime.run()
        traces["trace"] = trace

    results["checks"] = run_invariant_checks(traces, results)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, trace in traces.items():
            trace.write(out_dir / (f"{name}.ndjson" if name != "trace" else "trace.ndjson"))
        import json
        with open(out_dir / "metrics.json", "w") as f:
            json.dump(results, f, indent=2, sort_keys=True)
    return results


def build_lifting_config(cfg: ScenarioConfig,
                         approver: Optional[object] = None) -> LiftingConfig:
    return LiftingConfig(
        scheme_path=cfg.doc_path("scheme"),
        plan_libraries=cfg.plan_library_paths(),
        reservoir_path=cfg.doc_path("reservoir"),
        constraints_path=cfg.doc_path("constraints"),
        approver=approver or ScriptedApprover.from_file(cfg.doc_path("approver")),
        max_rounds=cfg.max_rounds,
        max_ticks=cfg.max_ticks,
        approval_remind_ticks=cfg.approval_remind_ticks,
        approval_abort_ticks=cfg.approval_abort_ticks,
    )


def run_invariant_checks(traces: dict, results: dict) -> list[dict]:
    from .trace import check_wellformed
    checks = []
    for name, trace in traces.items():
        recs = _as_dicts(trace.records)
        problems = check_wellformed(recs)
        for r in recs:
            if r["kind"] == "plant":
                u = r["payload"]["u"]
                if not (0.0 <= u <= 1.0):
                    problems.append(f"valve flow {u} out of [0,1] at tick {r['tick']}")
                    break
        checks.append({"trace": name, "ok": not problems, "problems": problems})
    return checks


def bench_latency(cfg: ScenarioConfig, n_trials: int) -> dict:
    """Reaction-latency statistics: event-driven agent vs. polled chart.

    Stop times are drawn uniformly over one polling interval (tick-quantized)
    using the config seed; each trial simulates until the controller's first
    reaction to the injected compressor stop.
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    if cfg.mode != "exchanger_compare":
        raise ConfigError("bench needs an exchanger_compare config (both paradigms)")
    rng = random.Random(cfg.seed)
    dt = cfg.plant_params.tick_dt
    ticks_per_period = int(round(cfg.polling_period / dt))
    stop_ticks = [rng.randrange(ticks_per_period) for _ in range(n_trials)]

    t0 = time.perf_counter()
    samples: dict[str, list[float]] = {"agent": [], "sfc": []}
    for stop_tick in stop_ticks:
        stop_at = round(stop_tick * dt, 9)
        horizon = stop_at + 2 * cfg.polling_period
        trial_cfg = replace(
            cfg, duration=horizon,
            injections=[Injection("compressor_stop", stop_at)],
        )
        for paradigm in ("agent", "sfc"):
            trace = Trace()
            run_exchanger(trial_cfg, paradigm, trace, first_reaction_only=True)
            lat = reaction_latencies(trace.records)
            stop_lat = [l["latency"] for l in lat
                        if l["injection"] == "compressor_stop" and l["latency"] is not None]
            if not stop_lat:
                raise RuntimeError(f"{paradigm} trial never reacted (stop at {stop_at})")
            samples[paradigm].append(stop_lat[0])
    elapsed = time.perf_counter() - t0

    def stats(xs: list[float]) -> dict:
        return {
            "n": len(xs),
            "min": min(xs),
            "mean": statistics.fmean(xs),
            "max": max(xs),
            "stddev": statistics.pstdev(xs) if len(xs) > 1 else 0.0,
        }

    return {
        "trials": n_trials,
        "seed": cfg.seed,
        "polling_period": cfg.polling_period,
        "tick_dt": dt,
        "agent": stats(samples["agent"]),
        "sfc": stats(samples["sfc"]),
        "wall_clock_s": round(elapsed, 3),
    }

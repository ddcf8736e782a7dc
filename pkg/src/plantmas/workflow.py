"""Artificial-lifting workflow: four BDI agents plus human-in-the-loop approval.

The organisational coordinator dispatches enabled scheme goals as achieve
messages to the committed agents (modeller, optimiser, chatbot, controller).
Agents do their work through artifact calls (modeller, optimizer, control
system, agency) and the chatbot runs the approval protocol with the engineer
and operator human proxies.  A contest sends adjustments back for a new
optimization round; rounds are bounded by ``max_rounds``.

Everything advances in the same lock-step tick model as the agent runtime;
human decisions enter as messages at tick boundaries, either from a scripted
approver policy or from an external queue (service mode).
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import yaml

from . import mediation, org
from .agent import ActionFailure, Agent
from .mediation import ArtifactCall, MessageBus, Registry, invoke_artifact
from .planlib import build_agent
from .terms import Struct
from .trace import Trace

ENGINEER = "engineer"
OPERATOR = "operator"

ACCEPT = "accept"
CONTEST = "contest"

PHASE_INITIAL = "initial"
PHASE_RECHECK = "recheck"
PHASE_FINAL = "final_check"

_AGENCY_MAX_ATTEMPTS = 4  # one initial call plus up to three retries


class WorkflowError(Exception):
    pass


class InvalidDecision(WorkflowError):
    pass


@dataclass
class OptimizationProposal:
    id: str
    model_ref: str
    parameters: dict
    objective_value: float
    round: int
    constraints: dict

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "model_ref": self.model_ref,
            "parameters": self.parameters,
            "objective_value": self.objective_value,
            "round": self.round,
            "constraints": self.constraints,
        }


@dataclass
class ApprovalDecision:
    proposal_id: str
    actor: str
    verdict: str
    adjustments: dict = field(default_factory=dict)
    note: str = ""

    def __post_init__(self):
        if self.actor not in (ENGINEER, OPERATOR):
            raise InvalidDecision(f"unknown actor {self.actor!r}")
        if self.verdict not in (ACCEPT, CONTEST):
            raise InvalidDecision(f"unknown verdict {self.verdict!r}")
        if self.verdict == CONTEST and not self.adjustments and not self.note:
            raise InvalidDecision("a contest needs at least one adjustment or a note")

    def to_doc(self) -> dict:
        return {
            "proposal_id": self.proposal_id,
            "actor": self.actor,
            "verdict": self.verdict,
            "adjustments": self.adjustments,
            "note": self.note,
        }


# ---------------------------------------------------------------------------
# approvers


class ScriptedApprover:
    """Total decision policy from a document: a default plus overrides.

    Overrides match on any subset of (round, actor, phase); the first match
    wins.  The default makes the policy total over every reachable proposal.
    """

    def __init__(self, doc: dict):
        self.default = doc.get("default", {"verdict": ACCEPT})
        self.overrides = doc.get("overrides", []) or []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedApprover":
        with open(path) as f:
            return cls(yaml.safe_load(f))

    def __call__(self, actor: str, proposal: OptimizationProposal, phase: str) -> ApprovalDecision:
        chosen = self.default
        for ov in self.overrides:
            if "actor" in ov and ov["actor"] != actor:
                continue
            if "round" in ov and int(ov["round"]) != proposal.round:
                continue
            if "phase" in ov and ov["phase"] != phase:
                continue
            chosen = ov
            break
        return ApprovalDecision(
            proposal_id=proposal.id,
            actor=actor,
            verdict=chosen.get("verdict", ACCEPT),
            adjustments={k: float(v) for k, v in (chosen.get("adjustments") or {}).items()},
            note=chosen.get("note", ""),
        )


class QueueApprover:
    """Interactive approver: decisions arrive from an external queue.

    ``decide`` returns None while no matching decision has been submitted;
    the pending ask stays open across ticks.
    """

    def __init__(self):
        self._queue: list[ApprovalDecision] = []

    def submit(self, decision: ApprovalDecision) -> None:
        self._queue.append(decision)

    def poll(self, actor: str, proposal_id: str) -> Optional[ApprovalDecision]:
        for i, d in enumerate(self._queue):
            if d.actor == actor and d.proposal_id == proposal_id:
                return self._queue.pop(i)
        return None


# ---------------------------------------------------------------------------
# chatbot command grammar

_CMD_ACCEPT = re.compile(r"^\s*accept\s+(\S+)\s*$", re.IGNORECASE)
_CMD_CONTEST = re.compile(r"^\s*contest\s+(\S+)((?:\s+[A-Za-z_][A-Za-z0-9_]*=\S+)*)"
                          r'(?:\s+note="([^"]*)")?\s*$', re.IGNORECASE)
_CMD_STATUS = re.compile(r"^\s*status\s*$", re.IGNORECASE)
_CMD_HELP = re.compile(r"^\s*help\s*$", re.IGNORECASE)

HELP_TEXT = (
    'commands: accept <id> | contest <id> <param>=<value> ... [note="..."] | status | help'
)


def chatbot_parse(command: str) -> dict:
    """Structured command grammar; unrecognized input yields help, never a decision."""
    m = _CMD_ACCEPT.match(command)
    if m:
        return {"kind": "accept", "id": m.group(1)}
    m = _CMD_CONTEST.match(command)
    if m:
        adjustments = {}
        for pair in (m.group(2) or "").split():
            name, _, value = pair.partition("=")
            try:
                adjustments[name] = float(value)
            except ValueError:
                return {"kind": "help", "message": HELP_TEXT}
        note = m.group(3) or ""
        if not adjustments and not note:
            return {"kind": "help", "message": HELP_TEXT}
        return {"kind": "contest", "id": m.group(1), "adjustments": adjustments, "note": note}
    if _CMD_STATUS.match(command):
        return {"kind": "status"}
    if _CMD_HELP.match(command):
        return {"kind": "help", "message": HELP_TEXT}
    return {"kind": "help", "message": HELP_TEXT}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class LiftingConfig:
    scheme_path: Path
    plan_libraries: dict            # agent name -> path
    reservoir_path: Path
    constraints_path: Path
    approver: object                # callable(actor, proposal, phase) or QueueApprover
    max_rounds: int = 5
    max_ticks: int = 2000
    role_commitments: Optional[dict] = None   # role -> agent name
    registry: Optional[Registry] = None
    approval_remind_ticks: Optional[int] = None
    approval_abort_ticks: Optional[int] = None


# ---------------------------------------------------------------------------
# the runtime


@dataclass
class _PendingAsk:
    actor: str
    proposal_id: str
    phase: str
    asked_tick: int
    reminded: bool = False


class LiftingRuntime:
    """Drives the scheme, the four agents, the proxies, and the artifacts."""

    def __init__(self, cfg: LiftingConfig, trace: Optional[Trace] = None):
        self.cfg = cfg
        self.trace = trace or Trace()
        self.scheme = org.load_scheme_file(cfg.scheme_path)
        self.state = org.SchemeState(self.scheme)
        self.registry = cfg.registry or mediation.standard_registry()
        for name in list(cfg.plan_libraries) + [ENGINEER, OPERATOR]:
            if name not in self.registry.entities:
                self.registry.register(mediation.EntityDescriptor(name, mediation.AGENT))
        self.bus = MessageBus(self.registry)

        self.agents: dict[str, Agent] = {}
        for name, path in cfg.plan_libraries.items():
            ag = build_agent(path, trace=self.trace.hook(f"agent:{name}"))
            ag.name = name
            self._bind_actuators(ag)
            self.agents[name] = ag

        commitments = cfg.role_commitments or {r: r for r in self.scheme.roles}
        for role, agent_name in sorted(commitments.items()):
            self.state.commit(role, agent_name)

        with open(cfg.reservoir_path) as f:
            self.reservoir = yaml.safe_load(f)
        with open(cfg.constraints_path) as f:
            self.constraints = yaml.safe_load(f)

        self.tick = 0
        self.round = 0
        self.proposals: dict[str, OptimizationProposal] = {}
        self.decisions: list[ApprovalDecision] = []
        self.pending_asks: list[_PendingAsk] = []
        self.model: Optional[dict] = None
        self.applied: Optional[dict] = None
        self.receipt: Optional[dict] = None
        self.failure: Optional[str] = None
        self._next_corr = 0
        self._managed_beliefs: dict[str, Struct] = {}
        self._percept_inbox: dict[str, list] = {n: [] for n in self.agents}
        self._goal_inbox: dict[str, list] = {n: [] for n in self.agents}
        self._operator_contests_this_round = 0
        self._stage_started: dict[str, int] = {}
        self._stage_achieved: dict[str, int] = {}

    # -- plumbing -------------------------------------------------------------

    def _corr(self) -> str:
        self._next_corr += 1
        return f"C-{self._next_corr:04d}"

    def _call(self, entity: str, operation: str, payload: dict) -> mediation.ArtifactResult:
        call = ArtifactCall(operation, payload, self._corr())
        self.trace.add("workflow", "artifact-call", {
            "entity": entity, "operation": operation,
            "correlation_id": call.correlation_id, "payload": payload,
        })
        result = invoke_artifact(self.registry, entity, call)
        self.trace.add("workflow", "artifact-result", {
            "entity": entity, "correlation_id": result.correlation_id,
            "status": result.status, "payload": result.payload,
        })
        return result

    def _broadcast(self, functor: str, *args) -> None:
        """Managed shared belief: replaces any previous value next tick."""
        new = Struct(functor, tuple(args))
        old = self._managed_beliefs.get(functor)
        if old == new:
            return
        for name in self.agents:
            if old is not None:
                self._percept_inbox[name].append(("-", old))
            self._percept_inbox[name].append(("+", new))
        self._managed_beliefs[functor] = new

    def _retract(self, functor: str) -> None:
        old = self._managed_beliefs.pop(functor, None)
        if old is not None:
            for name in self.agents:
                self._percept_inbox[name].append(("-", old))

    def _agent_for_goal(self, goal_id: str) -> str:
        role = self.scheme.find(goal_id).role
        return self.state.commitments[role]

    def _goal_status(self, goal_id: str, status: str) -> None:
        self.trace.add("org", "goal-status", {"goal": goal_id, "status": status})

    # -- actuators bound into the BDI agents -----------------------------------

    def _bind_actuators(self, ag: Agent) -> None:
        ag.actuators.update({
            "acquire_reservoir_data": self._act_acquire,
            "build_model": self._act_build_model,
            "run_optimizer": self._act_run_optimizer,
            "ask_engineer": self._act_ask_engineer,
            "ask_operator": self._act_ask_operator,
            "recheck_with_engineer": self._act_recheck,
            "record_acceptance": self._act_record_acceptance,
            "request_revision": self._act_request_revision,
            "ask_final_check": self._act_final_check,
            "apply_setup": self._act_apply_setup,
            "report_agency": self._act_report_agency,
            "goal_done": self._act_goal_done,
            "goal_fail": self._act_goal_fail,
        })

    def _act_acquire(self, ag: Agent, term: Struct) -> None:
        self.trace.add("workflow", "artifact-call", {
            "entity": "process_information", "operation": "read_fixture",
            "correlation_id": self._corr(), "payload": {"path": str(self.cfg.reservoir_path)},
        })
        self._broadcast("reservoir_data", self.reservoir.get("well", "r0"))

    def _act_build_model(self, ag: Agent, term: Struct) -> None:
        result = self._call("modeller_artifact", "build_model",
                            {"reservoir_data": self.reservoir})
        if result.status != mediation.OK:
            raise WorkflowError(f"modeller fault: {result.payload}")
        self.model = result.payload
        self._broadcast("model_ready", f"M-{self.reservoir.get('well', 'r0')}")

    def _act_run_optimizer(self, ag: Agent, term: Struct) -> None:
        self.round += 1
        self._operator_contests_this_round = 0
        result = self._call("optimizer_artifact", "optimize",
                            {"model": self.model, "constraints": self.constraints})
        if result.status != mediation.OK:
            raise WorkflowError(f"optimizer fault: {result.payload}")
        proposal = OptimizationProposal(
            id=f"P-{self.round}",
            model_ref=f"M-{self.reservoir.get('well', 'r0')}",
            parameters=result.payload["parameters"],
            objective_value=result.payload["objective_value"],
            round=self.round,
            constraints=copy.deepcopy(self.constraints),
        )
        self.proposals[proposal.id] = proposal
        self._broadcast("proposal", proposal.id)

    def _ask(self, actor: str, proposal_id: str, phase: str) -> None:
        proposal = self.proposals[proposal_id]
        receipt = self.bus.send("chatbot", actor, "tell", {
            "proposal": proposal.to_doc(), "phase": phase,
        }, self.tick)
        self.trace.add("workflow", "message", {
            "from": "chatbot", "to": actor, "performative": "tell",
            "proposal_id": proposal_id, "phase": phase, "deliver_at": receipt.deliver_at,
        })
        self.pending_asks.append(_PendingAsk(actor, proposal_id, phase, self.tick))

    def _act_ask_engineer(self, ag: Agent, term: Struct) -> None:
        self._ask(ENGINEER, str(term.args[0]), PHASE_INITIAL)

    def _act_ask_operator(self, ag: Agent, term: Struct) -> None:
        self._ask(OPERATOR, str(term.args[0]), PHASE_INITIAL)

    def _act_recheck(self, ag: Agent, term: Struct) -> None:
        # bounded ping-pong: a second operator contest in a round forces revision
        if self._operator_contests_this_round >= 2:
            self._act_request_revision(ag, term)
        else:
            self._ask(ENGINEER, str(term.args[0]), PHASE_RECHECK)

    def _act_record_acceptance(self, ag: Agent, term: Struct) -> None:
        self._broadcast("accepted_proposal", str(term.args[0]))

    def _act_request_revision(self, ag: Agent, term: Struct) -> None:
        pid = str(term.args[0])
        last = next((d for d in reversed(self.decisions)
                     if d.proposal_id == pid and d.verdict == CONTEST), None)
        self._revise(pid, last.adjustments if last else {}, last.note if last else "")

    def _revise(self, proposal_id: str, adjustments: dict, note: str) -> None:
        if self.round >= self.cfg.max_rounds:
            self._fail_workflow(f"revision of {proposal_id} would exceed max_rounds="
                                f"{self.cfg.max_rounds}")
            return
        for name, value in adjustments.items():
            self.constraints[name] = {"lo": float(value), "hi": float(value)}
        self.trace.add("workflow", "event", {
            "revision": proposal_id, "adjustments": adjustments, "note": note,
            "next_round": self.round + 1,
        })
        self._retract("proposal")
        self._retract("accepted_proposal")
        self._retract("applied_setup")
        stage_iii = "stage_iii_optimise_parameters"
        resets = [stage_iii] + [
            leaf.id for leaf in self.scheme.find("stage_iv_setup_control").children
            if leaf.is_leaf
        ]
        self.state.reset_for_retry(resets)
        for gid in resets:
            self._goal_status(gid, org.WAITING)
        self.pending_asks = [a for a in self.pending_asks if a.proposal_id != proposal_id]

    def _act_final_check(self, ag: Agent, term: Struct) -> None:
        self._ask(ENGINEER, str(term.args[0]), PHASE_FINAL)

    def _act_apply_setup(self, ag: Agent, term: Struct) -> None:
        pid = str(term.args[0])
        proposal = self.proposals[pid]
        result = self._call("control_system", "apply_setup",
                            {"parameters": proposal.parameters, "proposal_id": pid})
        if result.status != mediation.OK:
            raise WorkflowError(f"control system fault: {result.payload}")
        self.applied = result.payload["parameters"]
        self._broadcast("applied_setup", pid)

    def _act_report_agency(self, ag: Agent, term: Struct) -> None:
        pid = str(term.args[0])
        proposal = self.proposals[pid]
        report = {
            "proposal_id": pid,
            "parameters": self.applied,
            "objective_value": proposal.objective_value,
            "approval_chain": [d.to_doc() for d in self.decisions if d.proposal_id == pid],
        }
        for attempt in range(1, _AGENCY_MAX_ATTEMPTS + 1):
            result = self._call("agency", "submit_report", {"report": report})
            if result.status == mediation.OK:
                self.receipt = result.payload
                return
        self._fail_workflow("agency kept faulting; reporting stage failed")
        raise ActionFailure("agency reporting exhausted its retry budget")

    def _act_goal_done(self, ag: Agent, term: Struct) -> None:
        gid = term.args[0]
        if self.state.leaf_status.get(gid) != org.IN_PROGRESS:
            return  # stale completion from before a revision reset
        self.state.mark(gid, org.ACHIEVED)
        self._stage_achieved[gid] = self.tick
        self._goal_status(gid, org.ACHIEVED)

    def _act_goal_fail(self, ag: Agent, term: Struct) -> None:
        gid = term.args[0]
        if self.state.leaf_status.get(gid) != org.IN_PROGRESS:
            return
        self.state.mark(gid, org.FAILED)
        self._goal_status(gid, org.FAILED)
        self.failure = self.failure or f"goal {gid} failed"

    def _fail_workflow(self, reason: str) -> None:
        self.failure = reason
        for gid, status in self.state.leaf_status.items():
            if status == org.IN_PROGRESS:
                self.state.mark(gid, org.FAILED)
                self._goal_status(gid, org.FAILED)
                break
        else:
            for leaf in self.scheme.leaves():
                if self.state.leaf_status[leaf.id] == org.WAITING:
                    self.state.leaf_status[leaf.id] = org.FAILED
                    self._goal_status(leaf.id, org.FAILED)
                    break
        self.trace.add("workflow", "event", {"workflow_failed": reason})

    # -- proxies ----------------------------------------------------------------

    def _proxy_respond(self) -> None:
        still_pending: list[_PendingAsk] = []
        for ask in self.pending_asks:
            if self.tick <= ask.asked_tick:  # message not yet delivered
                still_pending.append(ask)
                continue
            proposal = self.proposals[ask.proposal_id]
            decision: Optional[ApprovalDecision]
            if isinstance(self.cfg.approver, QueueApprover):
                decision = self.cfg.approver.poll(ask.actor, ask.proposal_id)
                if decision is None:
                    waited = self.tick - ask.asked_tick
                    if (self.cfg.approval_remind_ticks is not None and not ask.reminded
                            and waited >= self.cfg.approval_remind_ticks):
                        ask.reminded = True
                        self.trace.add("workflow", "message", {
                            "from": "chatbot", "to": ask.actor, "performative": "tell",
                            "reminder": ask.proposal_id,
                        })
                    if (self.cfg.approval_abort_ticks is not None
                            and waited >= self.cfg.approval_abort_ticks):
                        self._fail_workflow(f"approval timeout waiting on {ask.actor} "
                                            f"for {ask.proposal_id}")
                        continue
                    still_pending.append(ask)
                    continue
            else:
                decision = self.cfg.approver(ask.actor, proposal, ask.phase)
            self._deliver_decision(ask, decision)
        self.pending_asks = still_pending

    def _deliver_decision(self, ask: _PendingAsk, decision: ApprovalDecision) -> None:
        self.decisions.append(decision)
        self.trace.add("workflow", "decision", decision.to_doc() | {"phase": ask.phase})
        if decision.actor == OPERATOR and decision.verdict == CONTEST:
            self._operator_contests_this_round += 1
        functor = {
            (ENGINEER, PHASE_INITIAL): "engineer_decision",
            (ENGINEER, PHASE_RECHECK): "engineer_recheck",
            (ENGINEER, PHASE_FINAL): "final_check",
            (OPERATOR, PHASE_INITIAL): "operator_decision",
        }[(decision.actor, ask.phase)]
        content = Struct(functor, (decision.proposal_id, decision.verdict))
        # decisions are transient signals: drop any stale belief with the same
        # functor and proposal so a repeated verdict still raises an event
        chatbot = self.agents["chatbot"]
        for belief in [b for b in chatbot.beliefs
                       if b.functor == functor and b.args
                       and str(b.args[0]) == decision.proposal_id]:
            del chatbot.beliefs[belief]
        self.bus.send(decision.actor, "chatbot", "reply", content, self.tick)
        self.trace.add("workflow", "message", {
            "from": decision.actor, "to": "chatbot", "performative": "reply",
            "content": str(content),
        })

    # -- the tick loop ------------------------------------------------------------

    def pending_proposals(self) -> list[dict]:
        out = []
        for ask in self.pending_asks:
            doc = self.proposals[ask.proposal_id].to_doc()
            doc["awaiting"] = ask.actor
            doc["phase"] = ask.phase
            out.append(doc)
        return out

    def run(self) -> dict:
        self.trace.set_time(0, 0.0)
        for role, agent_name in sorted(self.state.commitments.items()):
            self.trace.add("org", "event", {"commit": {"role": role, "agent": agent_name}})
        for self.tick in range(self.cfg.max_ticks):
            self.trace.set_time(self.tick, float(self.tick))
            self.step_tick()
            root = self.state.root_status()
            if root in (org.ACHIEVED, org.FAILED):
                break
        root = self.state.root_status()
        self._goal_status(self.scheme.root.id, root)
        return self.metrics()

    def step_tick(self) -> None:
        # 1. deliver lock-step messages into agent inboxes
        for msg in self.bus.deliver(self.tick):
            ag = self.agents.get(msg.recipient)
            if ag is None:
                continue  # proxies are handled via pending_asks
            if msg.performative == "achieve":
                self._goal_inbox[msg.recipient].append(msg.content)
            else:
                self._percept_inbox[msg.recipient].append(("+", msg.content))

        # 2. coordinator dispatches enabled goals to committed agents
        for gid in sorted(self.state.enabled_goals()):
            agent_name = self._agent_for_goal(gid)
            self.state.mark(gid, org.IN_PROGRESS)
            self._stage_started.setdefault(gid, self.tick)
            self._goal_status(gid, org.IN_PROGRESS)
            self.bus.send("coordinator", agent_name, "achieve", Struct(gid), self.tick)
            self.trace.add("workflow", "message", {
                "from": "coordinator", "to": agent_name,
                "performative": "achieve", "goal": gid,
            })

        # 3. agents advance in fixed order
        for name, ag in self.agents.items():
            for goal in self._goal_inbox[name]:
                ag.post_goal(goal)
            self._goal_inbox[name] = []
            delta = self._percept_inbox[name]
            self._percept_inbox[name] = []
            ag.reasoning_cycle(delta, self.tick)

        # 4. human proxies answer (or keep waiting, in interactive mode)
        self._proxy_respond()

    def metrics(self) -> dict:
        root = self.state.root_status()
        return {
            "mode": "lifting",
            "outcome": root,
            "failure": self.failure,
            "rounds": self.round,
            "optimizer_invocations": sum(
                1 for r in self.trace.records
                if r.kind == "artifact-call" and r.payload.get("entity") == "optimizer_artifact"
            ),
            "stage_timings": {
                gid: {"started": self._stage_started.get(gid),
                      "achieved": self._stage_achieved.get(gid)}
                for gid in sorted(self._stage_started)
            },
            "applied_parameters": self.applied,
            "receipt": self.receipt,
            "decisions": [d.to_doc() for d in self.decisions],
            "ticks": self.tick + 1,
        }

"""Plan-library documents: one YAML document per agent.

Example::

    agent: protector
    beliefs:
      - switch(open)
      - cond_op(normal)
    override_events:
      - abnormal_temperature
    plans:
      - name: controlRule1
        trigger: "+compressor_stopped"
        context: "switch(open) & cond_op(normal)"
        body:
          - "act valve(1.0)"
          - "act engage_stabiliser"

Body step forms:
  ``act f(args)``      external action
  ``+f(args)``         add belief
  ``-f(args)``         remove belief
  ``!f(args)``         post subgoal
  ``at(N, +f(args))``  schedule event N ticks from now
  ``drop_all_intentions``
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import yaml

from .agent import (
    Action,
    AddBelief,
    Agent,
    DropAll,
    Plan,
    RemoveBelief,
    Schedule,
    Subgoal,
    TraceFn,
)
from .terms import Struct, TermSyntaxError, Var, parse_conjunction, parse_struct


class PlanLibraryError(ValueError):
    pass


def _parse_trigger(text: str) -> tuple[str, bool, Struct]:
    text = text.strip()
    if not text or text[0] not in "+-":
        raise PlanLibraryError(f"trigger must start with + or -: {text!r}")
    polarity, rest = text[0], text[1:].strip()
    goal = rest.startswith("!")
    if goal:
        rest = rest[1:]
    return polarity, goal, parse_struct(rest)


def _parse_step(text: str):
    text = text.strip()
    if text == "drop_all_intentions":
        return DropAll()
    if text.startswith("act "):
        return Action(parse_struct(text[4:]))
    if text.startswith("!"):
        return Subgoal(parse_struct(text[1:]))
    if text.startswith("at("):
        inner = text[3:].rstrip()
        if not inner.endswith(")"):
            raise PlanLibraryError(f"malformed schedule step {text!r}")
        inner = inner[:-1]
        delay_src, _, event_src = inner.partition(",")
        event_src = event_src.strip()
        if not event_src or event_src[0] not in "+-":
            raise PlanLibraryError(f"schedule event needs polarity: {text!r}")
        polarity, goal, term = _parse_trigger(event_src)
        delay_src = delay_src.strip()
        delay = Var(delay_src) if delay_src[0].isupper() else int(float(delay_src))
        return Schedule(delay, polarity, term, goal)
    if text.startswith("+"):
        return AddBelief(parse_struct(text[1:]))
    if text.startswith("-"):
        return RemoveBelief(parse_struct(text[1:]))
    raise PlanLibraryError(f"unrecognized body step {text!r}")


def _collect_vars(term) -> set[str]:
    out: set[str] = set()
    if isinstance(term, Var):
        out.add(term.name)
    elif isinstance(term, Struct):
        for a in term.args:
            out |= _collect_vars(a)
    return out


def _step_vars(step) -> set[str]:
    if isinstance(step, (Action, AddBelief, RemoveBelief, Subgoal)):
        return _collect_vars(step.term)
    if isinstance(step, Schedule):
        vs = _collect_vars(step.term)
        if isinstance(step.delay, Var):
            vs.add(step.delay.name)
        return vs
    return set()


def parse_plan_library(doc: dict, source: str = "<doc>") -> dict:
    """Validate and parse one plan-library document into runtime parts."""
    try:
        beliefs = [parse_struct(b) for b in doc.get("beliefs", []) or []]
        overrides = set(doc.get("override_events", []) or [])
        plans: list[Plan] = []
        for idx, pdoc in enumerate(doc.get("plans", []) or []):
            polarity, goal, trigger = _parse_trigger(pdoc["trigger"])
            context = parse_conjunction(pdoc.get("context", "") or "")
            body = [_parse_step(s) for s in pdoc.get("body", []) or []]
            name = pdoc.get("name", f"plan_{idx}")
            bound = _collect_vars(trigger)
            for c in context:
                bound |= _collect_vars(c)
            for step in body:
                free = _step_vars(step) - bound
                if free:
                    raise PlanLibraryError(
                        f"{source}: plan {name!r} uses unbound variables {sorted(free)}"
                    )
            plans.append(Plan(name, polarity, goal, trigger, context, body, idx))
    except (KeyError, TermSyntaxError) as exc:
        raise PlanLibraryError(f"{source}: {exc}") from exc
    return {
        "agent": doc.get("agent", "agent"),
        "beliefs": beliefs,
        "override_events": overrides,
        "plans": plans,
    }


def load_plan_library(path: str | Path) -> dict:
    path = Path(path)
    with open(path) as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict):
        raise PlanLibraryError(f"{path}: expected a mapping document")
    return parse_plan_library(doc, source=str(path))


def build_agent(path: str | Path, trace: Optional[TraceFn] = None) -> Agent:
    parts = load_plan_library(path)
    return Agent(
        parts["agent"],
        plans=parts["plans"],
        beliefs=parts["beliefs"],
        override_events=parts["override_events"],
        trace=trace,
    )

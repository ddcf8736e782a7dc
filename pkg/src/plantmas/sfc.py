"""Polled sequential-flow-chart interpreter (the classical baseline).

A chart is a set of named steps with entry actions plus guarded transitions
between them.  Guards are boolean expressions over named snapshot variables
and are only evaluated at polling boundaries (multiples of the polling
period, anchored at t = 0).  Exactly one step is active; transitions marked
``abnormal: true`` are hoisted ahead of the others in their step, mirroring
the redundant high-priority abnormal-temperature check of the original
diagrams.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .terms import Struct, parse_struct

_BOUNDARY_EPS = 1e-9

FAULT_ACTION = Struct("valve", (1.0,))  # safe state: full cooling


class ChartError(ValueError):
    pass


_ALLOWED_NODES = (
    ast.Expression, ast.BoolOp, ast.And, ast.Or, ast.UnaryOp, ast.Not, ast.USub,
    ast.Compare, ast.Eq, ast.NotEq, ast.Lt, ast.LtE, ast.Gt, ast.GtE,
    ast.Name, ast.Constant, ast.Load, ast.BinOp, ast.Add, ast.Sub, ast.Mult, ast.Div,
)


def compile_guard(source: str) -> tuple:
    """Compile a guard expression; returns (code object, variable names)."""
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ChartError(f"guard {source!r}: {exc}") from exc
    names = set()
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ChartError(f"guard {source!r}: disallowed construct {type(node).__name__}")
        if isinstance(node, ast.Name):
            names.add(node.id)
    return compile(tree, f"<guard {source!r}>", "eval"), names


@dataclass(frozen=True)
class Transition:
    from_step: str
    to_step: str
    guard_src: str
    guard_code: object
    guard_vars: frozenset
    abnormal: bool = False


@dataclass(frozen=True)
class SfcStep:
    name: str
    actions: tuple  # tuple of Struct


@dataclass(frozen=True)
class SfcChart:
    steps: dict
    transitions: tuple
    initial_step: str
    polling_period: float
    variables: frozenset

    def transitions_from(self, step_name: str) -> list[Transition]:
        same = [t for t in self.transitions if t.from_step == step_name]
        return [t for t in same if t.abnormal] + [t for t in same if not t.abnormal]


@dataclass
class ChartState:
    active_step: str
    halted: bool = False
    fault: Optional[str] = None
    polls: int = 0
    last_transition: Optional[str] = None
    history: list = field(default_factory=list)


def load_chart(doc: dict, source: str = "<doc>") -> SfcChart:
    """Validate a chart document; all guard variables must be declared."""
    if not isinstance(doc, dict):
        raise ChartError(f"{source}: expected a mapping document")
    period = float(doc.get("polling_period", 5.0))
    if period <= 0:
        raise ChartError(f"{source}: polling_period must be > 0")
    declared = set(doc.get("variables", []) or [])

    steps: dict[str, SfcStep] = {}
    for sdoc in doc.get("steps", []) or []:
        name = sdoc["name"]
        if name in steps:
            raise ChartError(f"{source}: duplicate step {name!r}")
        actions = tuple(parse_struct(a) for a in sdoc.get("actions", []) or [])
        steps[name] = SfcStep(name, actions)

    initial = doc.get("initial_step")
    if initial not in steps:
        raise ChartError(f"{source}: initial step {initial!r} is not declared")

    transitions = []
    for tdoc in doc.get("transitions", []) or []:
        frm, to = tdoc["from"], tdoc["to"]
        for ref in (frm, to):
            if ref not in steps:
                raise ChartError(f"{source}: transition references undeclared step {ref!r}")
        code, names = compile_guard(tdoc["guard"])
        unknown = names - declared
        if unknown:
            raise ChartError(
                f"{source}: guard {tdoc['guard']!r} uses undeclared variables {sorted(unknown)}"
            )
        transitions.append(Transition(frm, to, tdoc["guard"], code, frozenset(names),
                                      bool(tdoc.get("abnormal", False))))

    return SfcChart(steps, tuple(transitions), initial, period, frozenset(declared))


def load_chart_file(path: str | Path) -> SfcChart:
    path = Path(path)
    with open(path) as f:
        return load_chart(yaml.safe_load(f), source=str(path))


def initial_state(chart: SfcChart) -> ChartState:
    return ChartState(active_step=chart.initial_step)


def is_boundary(now: float, period: float) -> bool:
    ratio = now / period
    return abs(ratio - round(ratio)) < _BOUNDARY_EPS


def poll_tick(chart: SfcChart, state: ChartState, variable_snapshot: dict, now: float) -> list[Struct]:
    """Evaluate guards at a polling boundary; no-op between boundaries.

    Returns the destination step's actions when a transition fires.  A
    snapshot missing a guard variable emits the safe-state fault action and
    halts the chart.
    """
    if state.halted or not is_boundary(now, chart.polling_period):
        return []
    state.polls += 1
    for tr in chart.transitions_from(state.active_step):
        missing = tr.guard_vars - variable_snapshot.keys()
        if missing:
            state.halted = True
            state.fault = f"snapshot missing {sorted(missing)} at t={now}"
            return [FAULT_ACTION]
        if bool(eval(tr.guard_code, {"__builtins__": {}}, dict(variable_snapshot))):
            state.active_step = tr.to_step
            state.last_transition = f"{tr.from_step}->{tr.to_step}"
            state.history.append((now, state.last_transition))
            return list(chart.steps[tr.to_step].actions)
    return []

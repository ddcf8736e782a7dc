"""Minimal BDI-style agent runtime on a deterministic logical clock.

An agent holds a belief base (set semantics, insertion-ordered), a two-class
event queue (override events preempt normal ones), a plan library totally
ordered by declaration index, intention stacks, and timers.  One reasoning
cycle per tick:

  1. fire due timers,
  2. apply the percept delta, turning belief changes into events,
  3. dequeue one event (override first, FIFO within a class) and select the
     first applicable plan,
  4. execute exactly one step of one runnable intention.

Override-triggered plans whose body begins with a drop-all-intentions step
discard every non-protected intention before they start executing, and
their own intention is protected against later drops.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .terms import Bindings, Struct, solve_conjunction, substitute, unify

NORMAL = "normal"
OVERRIDE = "override"

ADDED = "+"
REMOVED = "-"


class AgentError(Exception):
    pass


class NonGroundBelief(AgentError):
    """Raised when a belief with unbound variables is stored."""


class ActionFailure(AgentError):
    """Raised by an actuator to signal that a plan step failed."""


@dataclass
class Event:
    polarity: str                 # ADDED | REMOVED
    content: Struct
    goal: bool = False            # True for achievement (sub)goal events
    timestamp: int = 0
    priority: str = NORMAL
    intention_id: Optional[int] = None   # set for subgoal events
    seq: int = 0

    def __str__(self) -> str:
        bang = "!" if self.goal else ""
        return f"{self.polarity}{bang}{self.content}"


# ---------------------------------------------------------------------------
# Plan bodies


@dataclass(frozen=True)
class Action:
    term: Struct


@dataclass(frozen=True)
class AddBelief:
    term: Struct


@dataclass(frozen=True)
class RemoveBelief:
    term: Struct


@dataclass(frozen=True)
class Subgoal:
    term: Struct


@dataclass(frozen=True)
class Schedule:
    delay: object          # number or Var, in ticks
    polarity: str
    term: Struct
    goal: bool = False


@dataclass(frozen=True)
class DropAll:
    pass


Step = object


@dataclass
class Plan:
    name: str
    trigger_polarity: str
    trigger_goal: bool
    trigger: Struct
    context: list[Struct]
    body: list[Step]
    index: int

    def matches(self, event: Event) -> Optional[Bindings]:
        if event.polarity != self.trigger_polarity or event.goal != self.trigger_goal:
            return None
        return unify(self.trigger, event.content, {})


@dataclass
class PlanInstance:
    plan: Plan
    bindings: Bindings
    event: Event
    tried: set = field(default_factory=set)
    step_idx: int = 0

    def current_step(self) -> Optional[Step]:
        if self.step_idx < len(self.plan.body):
            return self.plan.body[self.step_idx]
        return None


@dataclass
class Intention:
    id: int
    stack: list[PlanInstance] = field(default_factory=list)
    protected: bool = False
    waiting: bool = False     # suspended until a posted subgoal event is handled


@dataclass
class Timer:
    id: int
    fire_at: int
    event: Event
    cancelled: bool = False


TraceFn = Callable[[str, dict], None]


class Agent:
    """One BDI agent.  Drive it with :meth:`reasoning_cycle` once per tick."""

    def __init__(
        self,
        name: str,
        plans: Optional[list[Plan]] = None,
        beliefs: Optional[list[Struct]] = None,
        override_events: Optional[set[str]] = None,
        trace: Optional[TraceFn] = None,
    ):
        self.name = name
        self.plans: list[Plan] = sorted(plans or [], key=lambda p: p.index)
        self.beliefs: dict[Struct, None] = {}
        self.override_events: set[str] = set(override_events or ())
        self.q_override: deque[Event] = deque()
        self.q_normal: deque[Event] = deque()
        self.intentions: dict[int, Intention] = {}
        self.timers: dict[int, Timer] = {}
        self.actuators: dict[str, Callable] = {}
        self._next_intention = 0
        self._next_timer = 0
        self._next_event_seq = 0
        self._trace = trace or (lambda kind, payload: None)
        self.now = 0
        for b in beliefs or []:
            if not b.is_ground():
                raise NonGroundBelief(f"initial belief {b} is not ground")
            self.beliefs[b] = None

    # -- belief base --------------------------------------------------------

    def belief_list(self) -> list[Struct]:
        return list(self.beliefs.keys())

    def add_belief(self, belief: Struct) -> list[Event]:
        """Insert a ground belief; emits an added event iff it was absent."""
        if not belief.is_ground():
            raise NonGroundBelief(f"belief {belief} is not ground")
        if belief in self.beliefs:
            return []
        self.beliefs[belief] = None
        ev = self._make_event(ADDED, belief)
        self._enqueue(ev)
        return [ev]

    def remove_belief(self, belief: Struct) -> list[Event]:
        """Remove a belief; emits a removed event iff it was present."""
        if belief not in self.beliefs:
            return []
        del self.beliefs[belief]
        ev = self._make_event(REMOVED, belief)
        self._enqueue(ev)
        return [ev]

    def _make_event(self, polarity: str, content: Struct, goal: bool = False,
                    intention_id: Optional[int] = None) -> Event:
        prio = OVERRIDE if content.functor in self.override_events else NORMAL
        ev = Event(polarity, content, goal=goal, timestamp=self.now, priority=prio,
                   intention_id=intention_id, seq=self._next_event_seq)
        self._next_event_seq += 1
        return ev

    def _enqueue(self, ev: Event) -> None:
        (self.q_override if ev.priority == OVERRIDE else self.q_normal).append(ev)
        self._trace("event", {"agent": self.name, "event": str(ev), "priority": ev.priority})

    def post_goal(self, goal: Struct) -> None:
        """Post an external achievement goal (e.g. from an achieve message)."""
        self._enqueue(self._make_event(ADDED, goal, goal=True))

    # -- timers --------------------------------------------------------------

    def schedule_at(self, delay_ticks: int, polarity: str, content: Struct,
                    goal: bool = False) -> int:
        """Register ``content`` for delivery ``delay_ticks`` from now.

        Fires at the first cycle whose clock >= now + delay; zero-delay timers
        therefore fire in the next cycle, never the current one.
        """
        if delay_ticks < 0:
            raise AgentError(f"negative timer delay {delay_ticks}")
        tid = self._next_timer
        self._next_timer += 1
        ev = self._make_event(polarity, content, goal=goal)
        self.timers[tid] = Timer(tid, self.now + int(delay_ticks), ev)
        return tid

    def cancel_timer(self, timer_id: int) -> None:
        """Cancel if pending; a fired or unknown id is a benign no-op."""
        timer = self.timers.pop(timer_id, None)
        if timer is None:
            self._trace("event", {"agent": self.name, "benign_cancel": timer_id})

    def _fire_due_timers(self) -> None:
        due = sorted(
            (t for t in self.timers.values() if t.fire_at <= self.now),
            key=lambda t: (t.fire_at, t.id),
        )
        for t in due:
            del self.timers[t.id]
            t.event.timestamp = self.now
            self._enqueue(t.event)

    # -- plan selection ------------------------------------------------------

    def select_plan(self, event: Event, exclude: Optional[set] = None) -> Optional[PlanInstance]:
        """First applicable plan by declaration index, or ``None``."""
        exclude = exclude or set()
        for plan in self.plans:
            if plan.index in exclude:
                continue
            b = plan.matches(event)
            if b is None:
                continue
            for sol in solve_conjunction(plan.context, self.belief_list(), b):
                return PlanInstance(plan, sol, event, tried={plan.index} | exclude)
        return None

    # -- the cycle -----------------------------------------------------------

    def reasoning_cycle(self, percept_delta: list[tuple[str, Struct]], now: int) -> list[Struct]:
        """Run one cycle at logical tick ``now``; returns emitted actions."""
        self.now = now
        actions: list[Struct] = []

        self._fire_due_timers()

        for polarity, belief in percept_delta:
            self._trace("percept", {"agent": self.name, "delta": f"{polarity}{belief}"})
            if polarity == ADDED:
                self.add_belief(belief)
            else:
                self.remove_belief(belief)

        self._handle_one_event()

        intention = self._pick_runnable()
        if intention is not None:
            self._execute_step(intention, actions)

        return actions

    def _handle_one_event(self) -> None:
        if self.q_override:
            event = self.q_override.popleft()
        elif self.q_normal:
            event = self.q_normal.popleft()
        else:
            return

        instance = self.select_plan(event)
        if instance is None:
            if event.intention_id is not None:
                parent = self.intentions.get(event.intention_id)
                if parent is not None:
                    parent.waiting = False
                    self._fail_step(parent)
            else:
                self._trace("event", {"agent": self.name, "unhandled": str(event)})
            return

        self._trace("plan-selected", {
            "agent": self.name, "plan": instance.plan.name,
            "event": str(event), "priority": event.priority,
        })

        if event.intention_id is not None:
            parent = self.intentions.get(event.intention_id)
            if parent is None:
                return
            parent.waiting = False
            parent.stack.append(instance)
            return

        intention = Intention(self._next_intention, [instance],
                              protected=(event.priority == OVERRIDE))
        self._next_intention += 1
        self.intentions[intention.id] = intention

        if (event.priority == OVERRIDE and instance.plan.body
                and isinstance(instance.plan.body[0], DropAll)):
            self._drop_all(keep=intention.id)
            instance.step_idx = 1

    def _drop_all(self, keep: int) -> None:
        dropped = [i for i in self.intentions.values()
                   if not i.protected and i.id != keep]
        for i in dropped:
            del self.intentions[i.id]
        self._trace("event", {"agent": self.name, "dropped_intentions": [i.id for i in dropped]})

    def _pick_runnable(self) -> Optional[Intention]:
        runnable = [i for i in self.intentions.values() if not i.waiting and i.stack]
        if not runnable:
            return None
        protected = [i for i in runnable if i.protected]
        pool = protected if protected else runnable
        return min(pool, key=lambda i: i.id)

    def _execute_step(self, intention: Intention, actions: list[Struct]) -> None:
        instance = intention.stack[-1]
        step = instance.current_step()
        while step is None:
            intention.stack.pop()
            if not intention.stack:
                del self.intentions[intention.id]
                self._trace("event", {"agent": self.name, "intention_done": intention.id})
                return
            instance = intention.stack[-1]
            instance.step_idx += 1
            step = instance.current_step()

        self._trace("intention-step", {
            "agent": self.name, "intention": intention.id,
            "protected": intention.protected, "plan": instance.plan.name,
            "step": instance.step_idx,
        })

        try:
            if isinstance(step, Action):
                term = substitute(step.term, instance.bindings)
                fn = self.actuators.get(term.functor)
                if fn is None:
                    raise ActionFailure(f"unregistered actuator {term.functor}")
                fn(self, term)
                actions.append(term)
                self._trace("action", {"agent": self.name, "action": str(term)})
                self._advance(intention, instance)
            elif isinstance(step, AddBelief):
                self.add_belief(substitute(step.term, instance.bindings))
                self._advance(intention, instance)
            elif isinstance(step, RemoveBelief):
                self.remove_belief(substitute(step.term, instance.bindings))
                self._advance(intention, instance)
            elif isinstance(step, Schedule):
                delay = substitute(step.delay, instance.bindings) if hasattr(step.delay, "name") else step.delay
                self.schedule_at(int(delay), step.polarity,
                                 substitute(step.term, instance.bindings), goal=step.goal)
                self._advance(intention, instance)
            elif isinstance(step, Subgoal):
                goal = substitute(step.term, instance.bindings)
                ev = self._make_event(ADDED, goal, goal=True, intention_id=intention.id)
                self._enqueue(ev)
                intention.waiting = True
                # the subgoal step completes when the pushed plan finishes
            elif isinstance(step, DropAll):
                self._drop_all(keep=intention.id)
                self._advance(intention, instance)
            else:
                raise ActionFailure(f"unknown step kind {step!r}")
        except ActionFailure as exc:
            self._trace("event", {"agent": self.name, "step_failed": str(exc),
                                  "plan": instance.plan.name})
            self._fail_step(intention)

    def _advance(self, intention: Intention, instance: PlanInstance) -> None:
        instance.step_idx += 1
        if instance.current_step() is None and intention.stack[-1] is instance:
            # finish exhausted frames eagerly so completion is visible this tick
            intention.stack.pop()
            if intention.stack:
                parent = intention.stack[-1]
                parent.step_idx += 1
            else:
                del self.intentions[intention.id]
                self._trace("event", {"agent": self.name, "intention_done": intention.id})

    def _fail_step(self, intention: Intention) -> None:
        """Current plan instance failed: retry with the next applicable plan
        for its original event, else propagate failure to the parent frame."""
        while intention.stack:
            failed = intention.stack.pop()
            retry = self.select_plan(failed.event, exclude=failed.tried)
            if retry is not None:
                retry.tried |= failed.tried
                intention.stack.append(retry)
                self._trace("plan-selected", {
                    "agent": self.name, "plan": retry.plan.name,
                    "event": str(failed.event), "retry": True,
                })
                return
        del self.intentions[intention.id]
        self._trace("event", {"agent": self.name, "intention_failed": intention.id})

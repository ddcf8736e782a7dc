"""Organisational layer: roles, goal schemes, commitments, scheme state.

A goal scheme is an acyclic tree of sub-goals with sequence/parallel
composition and a responsible role per goal.  Workflow changes such as
adding a validation sub-goal are edits to the scheme document only; agent
code and plan libraries stay untouched.  Canonical serialization backs a
content hash so that edits are detectable and round-trippable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional

import yaml

SEQUENCE = "sequence"
PARALLEL = "parallel"

WAITING = "waiting"
ENABLED = "enabled"
IN_PROGRESS = "in_progress"
ACHIEVED = "achieved"
FAILED = "failed"


class SchemeError(ValueError):
    pass


class IllegalTransition(SchemeError):
    pass


@dataclass(frozen=True)
class Goal:
    id: str
    role: str
    description: str = ""
    composition: str = SEQUENCE
    children: tuple = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class GoalScheme:
    root: Goal
    roles: frozenset

    @property
    def version(self) -> str:
        return hashlib.sha256(canonical_form(self).encode()).hexdigest()

    def walk(self) -> Iterator[Goal]:
        stack = [self.root]
        while stack:
            g = stack.pop(0)
            yield g
            stack = list(g.children) + stack

    def find(self, goal_id: str) -> Goal:
        for g in self.walk():
            if g.id == goal_id:
                return g
        raise SchemeError(f"unknown goal {goal_id!r}")

    def parent_of(self, goal_id: str) -> Optional[Goal]:
        for g in self.walk():
            if any(c.id == goal_id for c in g.children):
                return g
        return None

    def leaves(self) -> list[Goal]:
        return [g for g in self.walk() if g.is_leaf]


def _goal_to_doc(goal: Goal) -> dict:
    doc: dict = {"id": goal.id, "role": goal.role}
    if goal.description:
        doc["description"] = goal.description
    if goal.children:
        doc["composition"] = goal.composition
        doc["children"] = [_goal_to_doc(c) for c in goal.children]
    return doc


def scheme_to_doc(scheme: GoalScheme) -> dict:
    return {"roles": sorted(scheme.roles), "root": _goal_to_doc(scheme.root)}


def canonical_form(scheme: GoalScheme) -> str:
    return json.dumps(scheme_to_doc(scheme), sort_keys=True, separators=(",", ":"))


def _goal_from_doc(doc: dict, roles: set, seen: set, source: str) -> Goal:
    gid = doc.get("id")
    if not gid:
        raise SchemeError(f"{source}: goal without id")
    if gid in seen:
        raise SchemeError(f"{source}: duplicate goal id {gid!r}")
    seen.add(gid)
    role = doc.get("role")
    if role not in roles:
        raise SchemeError(f"{source}: goal {gid!r} names unknown role {role!r}")
    comp = doc.get("composition", SEQUENCE)
    if comp not in (SEQUENCE, PARALLEL):
        raise SchemeError(f"{source}: goal {gid!r} has invalid composition {comp!r}")
    children = tuple(
        _goal_from_doc(c, roles, seen, source) for c in doc.get("children", []) or []
    )
    return Goal(gid, role, doc.get("description", ""), comp, children)


def load_scheme(doc: dict, source: str = "<doc>") -> GoalScheme:
    """Validate a scheme document (single root, unique ids, known roles)."""
    if not isinstance(doc, dict):
        raise SchemeError(f"{source}: expected a mapping document")
    roles = set(doc.get("roles", []) or [])
    if not roles:
        raise SchemeError(f"{source}: no roles declared")
    root_doc = doc.get("root")
    if root_doc is None or "roots" in doc:
        raise SchemeError(f"{source}: scheme must have exactly one root")
    root = _goal_from_doc(root_doc, roles, set(), source)
    return GoalScheme(root, frozenset(roles))


def load_scheme_file(path: str | Path) -> GoalScheme:
    path = Path(path)
    with open(path) as f:
        return load_scheme(yaml.safe_load(f), source=str(path))


def save_scheme_file(scheme: GoalScheme, path: str | Path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(scheme_to_doc(scheme), f, sort_keys=False)


def insert_subgoal(scheme: GoalScheme, parent_id: str, position: int, new_goal: Goal) -> GoalScheme:
    """Splice a fresh goal into a parent's child sequence.

    Existing goal ids and subtrees are unchanged; the version hash changes.
    """
    existing = {g.id for g in scheme.walk()}
    new_ids = {g.id for g in GoalScheme(new_goal, scheme.roles).walk()}
    clash = existing & new_ids
    if clash:
        raise SchemeError(f"goal id collision: {sorted(clash)}")
    if new_goal.role not in scheme.roles:
        raise SchemeError(f"new goal names unknown role {new_goal.role!r}")

    def rebuild(goal: Goal) -> Goal:
        if goal.id == parent_id:
            kids = list(goal.children)
            if not (0 <= position <= len(kids)):
                raise SchemeError(f"position {position} out of range for {parent_id!r}")
            kids.insert(position, new_goal)
            return replace(goal, children=tuple(kids))
        return replace(goal, children=tuple(rebuild(c) for c in goal.children))

    scheme.find(parent_id)  # raises on unknown parent
    return GoalScheme(rebuild(scheme.root), scheme.roles)


# ---------------------------------------------------------------------------
# runtime scheme state


@dataclass
class SchemeState:
    scheme: GoalScheme
    leaf_status: dict = field(default_factory=dict)  # leaf id -> status
    commitments: dict = field(default_factory=dict)  # role -> agent name

    def __post_init__(self):
        for leaf in self.scheme.leaves():
            self.leaf_status.setdefault(leaf.id, WAITING)

    # -- commitments ---------------------------------------------------------

    def commit(self, role: str, agent_name: str) -> None:
        if role not in self.scheme.roles:
            raise SchemeError(f"unknown role {role!r}")
        if role in self.commitments:
            raise SchemeError(f"role {role!r} already committed to {self.commitments[role]!r}")
        self.commitments[role] = agent_name

    def fully_committed(self) -> bool:
        return set(self.commitments) == set(self.scheme.roles)

    # -- derived status ------------------------------------------------------

    def status(self, goal_id: str) -> str:
        goal = self.scheme.find(goal_id)
        return self._status(goal)

    def _status(self, goal: Goal) -> str:
        if goal.is_leaf:
            return self.leaf_status[goal.id]
        child_statuses = [self._status(c) for c in goal.children]
        if any(s == FAILED for s in child_statuses):
            return FAILED
        if all(s == ACHIEVED for s in child_statuses):
            return ACHIEVED
        if any(s in (IN_PROGRESS, ACHIEVED) for s in child_statuses):
            return IN_PROGRESS
        return WAITING

    def _goal_enabled(self, goal: Goal) -> bool:
        parent = self.scheme.parent_of(goal.id)
        if parent is None:
            return True
        if not self._goal_enabled(parent):
            return False
        if parent.composition == SEQUENCE:
            for sibling in parent.children:
                if sibling.id == goal.id:
                    break
                if self._status(sibling) != ACHIEVED:
                    return False
        return True

    def enabled_goals(self) -> set[str]:
        """Leaf goals whose sequencing preconditions are met and that are
        still waiting to start."""
        if self._status(self.scheme.root) == FAILED:
            return set()
        return {
            leaf.id
            for leaf in self.scheme.leaves()
            if self.leaf_status[leaf.id] == WAITING and self._goal_enabled(leaf)
        }

    # -- transitions ---------------------------------------------------------

    def mark(self, goal_id: str, new_status: str) -> None:
        goal = self.scheme.find(goal_id)
        if not goal.is_leaf:
            raise IllegalTransition(f"{goal_id!r} is not a leaf goal")
        current = self.leaf_status[goal_id]
        if new_status == IN_PROGRESS:
            if goal_id not in self.enabled_goals():
                raise IllegalTransition(
                    f"{goal_id!r} cannot start: status {current!r}, not enabled"
                )
        elif new_status in (ACHIEVED, FAILED):
            if current != IN_PROGRESS:
                raise IllegalTransition(
                    f"{goal_id!r} cannot finish: status {current!r}, not in progress"
                )
        else:
            raise IllegalTransition(f"invalid target status {new_status!r}")
        self.leaf_status[goal_id] = new_status

    def reset_for_retry(self, goal_ids: list[str]) -> None:
        """Workflow-level re-enable of finished/started leaves (revision loops)."""
        for gid in goal_ids:
            goal = self.scheme.find(gid)
            if not goal.is_leaf:
                raise SchemeError(f"{gid!r} is not a leaf goal")
            self.leaf_status[gid] = WAITING

    def root_status(self) -> str:
        return self._status(self.scheme.root)

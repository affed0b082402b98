"""Hierarchical statechart model and a deterministic event-driven engine.

Events are dispatched innermost-first: the active leaf is asked first, then
each ancestor up to the root. The first matching transition fires and the
machine descends through ``initial`` children until it reaches a leaf.
Events nobody handles are absorbed.

Definitions are plain data so they can be loaded from JSON::

    {
      "states": {"name": "root", "initial": "Idle", "children": [...]},
      "transitions": [{"from": "root/Idle", "event": "start", "to": "root/PickTask"}]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

from .errors import (
    AmbiguousTransition,
    DuplicateStateId,
    IoFailure,
    MissingInitialChild,
    UnknownStateInTransition,
    ValidationError,
)

KINDS = ("normal", "success", "failure")


@dataclass(frozen=True, order=True)
class StateId:
    """Path of state names from the root, e.g. ``root/PickTask/GraspObject``.

    Ordering is lexicographic over the path segments.
    """

    path: tuple[str, ...]

    def __post_init__(self):
        if not self.path:
            raise ValidationError("state path must not be empty")
        for seg in self.path:
            if not seg or "/" in seg:
                raise ValidationError(f"invalid state path segment {seg!r}")

    @classmethod
    def parse(cls, text: Union[str, "StateId"]) -> "StateId":
        if isinstance(text, StateId):
            return text
        return cls(tuple(text.split("/")))

    def __str__(self):
        return "/".join(self.path)

    @property
    def name(self) -> str:
        return self.path[-1]

    @property
    def parent(self) -> Optional["StateId"]:
        return StateId(self.path[:-1]) if len(self.path) > 1 else None

    def child(self, name: str) -> "StateId":
        return StateId(self.path + (name,))

    def is_ancestor_or_self(self, other: "StateId") -> bool:
        return other.path[: len(self.path)] == self.path


@dataclass
class StateNode:
    id: StateId
    children: list["StateNode"] = field(default_factory=list)
    kind: str = "normal"
    important: bool = True
    initial_child: Optional[StateId] = None

    def walk(self) -> Iterator["StateNode"]:
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass(frozen=True)
class EventDef:
    name: str
    payload: object = None  # ParameterSet; kept untyped to avoid an import cycle

    def __post_init__(self):
        if not self.name:
            raise ValidationError("event name must not be empty")


@dataclass(frozen=True, order=True)
class TransitionDef:
    src: StateId
    event_name: str
    dst: StateId


class Statechart:
    """A validated statechart. Build with :func:`build_statechart`."""

    def __init__(self, root: StateNode, transitions: list[TransitionDef]):
        self.root = root
        self.nodes: dict[StateId, StateNode] = {n.id: n for n in root.walk()}
        self.transitions = sorted(transitions)
        self._by_src = {(t.src, t.event_name): t for t in self.transitions}
        # per-leaf dispatch table, innermost handler wins
        self._dispatch: dict[StateId, dict[str, TransitionDef]] = {}
        for sid, node in self.nodes.items():
            if node.children:
                continue
            table: dict[str, TransitionDef] = {}
            for anc in self.ancestors(sid):
                for t in self.transitions:
                    if t.src == anc and t.event_name not in table:
                        table[t.event_name] = t
            self._dispatch[sid] = table

    def __contains__(self, sid: StateId) -> bool:
        return sid in self.nodes

    @property
    def leaves(self) -> list[StateId]:
        return [n.id for n in self.root.walk() if not n.children]

    @property
    def important_states(self) -> frozenset[StateId]:
        return frozenset(n.id for n in self.root.walk() if n.important)

    def node(self, sid: StateId) -> StateNode:
        return self.nodes[sid]

    def ancestors(self, sid: StateId) -> list[StateId]:
        """``sid`` and its ancestors, innermost first."""
        out = []
        cur: Optional[StateId] = sid
        while cur is not None:
            out.append(cur)
            cur = cur.parent
        return out

    def initial_leaf(self, sid: StateId) -> StateId:
        node = self.nodes[sid]
        while node.children:
            node = self.nodes[node.initial_child]
        return node.id

    def handler(self, leaf: StateId, event_name: str) -> Optional[TransitionDef]:
        return self._dispatch[leaf].get(event_name)

    def handled_events(self, leaf: StateId) -> list[str]:
        return sorted(self._dispatch[leaf])

    def start(self) -> "MachineState":
        return MachineState(self.initial_leaf(self.root.id), self)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        def enc(node: StateNode) -> dict:
            return {
                "name": node.id.name,
                "kind": node.kind,
                "important": node.important,
                "initial": node.initial_child.name if node.initial_child else None,
                "children": [enc(c) for c in node.children],
            }

        return {
            "states": enc(self.root),
            "transitions": [
                {"from": str(t.src), "event": t.event_name, "to": str(t.dst)}
                for t in self.transitions
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class MachineState:
    active: StateId
    statechart: Statechart = field(compare=False, repr=False)


def build_statechart(nodes: Iterable[StateNode], transitions: Iterable[TransitionDef]) -> Statechart:
    roots = list(nodes)
    if len(roots) != 1:
        raise ValidationError(f"expected a single root node, got {len(roots)}")
    root = roots[0]
    if len(root.id.path) != 1:
        raise ValidationError(f"root {root.id} must be a single-segment path")

    seen: set[StateId] = set()
    for node in root.walk():
        if node.id in seen:
            raise DuplicateStateId(str(node.id))
        seen.add(node.id)
        if node.kind not in KINDS:
            raise ValidationError(f"{node.id}: unknown kind {node.kind!r}")
        for c in node.children:
            if c.id.parent != node.id:
                raise ValidationError(f"{c.id} is not a direct child of {node.id}")
        if node.children:
            if node.kind != "normal":
                raise ValidationError(f"{node.id}: kind {node.kind} only allowed on leaves")
            if node.initial_child is None or node.initial_child not in {c.id for c in node.children}:
                raise MissingInitialChild(str(node.id))
        elif node.initial_child is not None:
            raise ValidationError(f"leaf {node.id} cannot have an initial child")

    trans = list(transitions)
    pairs: set[tuple[StateId, str]] = set()
    for t in trans:
        for sid in (t.src, t.dst):
            if sid not in seen:
                raise UnknownStateInTransition(str(sid))
        if (t.src, t.event_name) in pairs:
            raise AmbiguousTransition(f"{t.src} on {t.event_name!r}")
        pairs.add((t.src, t.event_name))
    return Statechart(root, trans)


def step(ms: MachineState, ev: EventDef) -> tuple[MachineState, Optional[TransitionDef]]:
    """Dispatch ``ev``; returns the new machine state and the fired transition."""
    sc = ms.statechart
    t = sc.handler(ms.active, ev.name)
    if t is None:
        return ms, None
    return MachineState(sc.initial_leaf(t.dst), sc), t


def active_state(ms: MachineState) -> StateId:
    return ms.active


# -- JSON -------------------------------------------------------------------

def statechart_from_dict(data: dict) -> Statechart:
    try:
        def dec(obj: dict, parent: Optional[StateId]) -> StateNode:
            sid = parent.child(obj["name"]) if parent else StateId((obj["name"],))
            children = [dec(c, sid) for c in obj.get("children", [])]
            init = obj.get("initial")
            return StateNode(
                id=sid,
                children=children,
                kind=obj.get("kind", "normal"),
                important=bool(obj.get("important", True)),
                initial_child=sid.child(init) if init else None,
            )

        root = dec(data["states"], None)
        trans = [
            TransitionDef(StateId.parse(t["from"]), t["event"], StateId.parse(t["to"]))
            for t in data["transitions"]
        ]
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"malformed statechart definition: {exc}") from exc
    return build_statechart([root], trans)


def load_statechart(path: Union[str, Path]) -> Statechart:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return statechart_from_dict(data)


def save_statechart(sc: Statechart, path: Union[str, Path]) -> None:
    try:
        Path(path).write_text(sc.dumps())
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from exc

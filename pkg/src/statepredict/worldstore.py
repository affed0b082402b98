"""World-state interning, transition counting and the ``.wsdb.jsonl`` format.

File layout (one canonical JSON object per line, sorted keys, no spaces)::

    {"format":"wsdb","version":1}
    {"id":0,"kind":"ws","phi":{},"psi":{...},"state":"root/Idle"}
    ...
    {"count":3,"from":0,"kind":"tr","to":1}
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from .errors import CorruptDatabase, IoFailure, UnknownWorldStateId, ValidationError
from .statechart import StateId

FORMAT_NAME = "wsdb"
FORMAT_VERSION = 1

Scalar = Union[bool, int, str]


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class ParameterSet(Mapping[str, Scalar]):
    """Immutable key/value set with canonical (key-sorted) equality.

    Values are booleans, integers or string tokens. Continuous values have to
    be discretized before they get here, otherwise equality is meaningless.
    """

    __slots__ = ("_items", "_key", "_hash")

    def __init__(self, entries: Union[Mapping[str, Scalar], Iterable[tuple[str, Scalar]], None] = None):
        pairs = list(entries.items() if isinstance(entries, Mapping) else (entries or ()))
        keys = [k for k, _ in pairs]
        if len(set(keys)) != len(keys):
            raise ValidationError(f"duplicate parameter keys in {keys}")
        for k, v in pairs:
            if not isinstance(k, str) or not k:
                raise ValidationError(f"parameter key must be a non-empty string, got {k!r}")
            if not isinstance(v, (bool, int, str)):
                raise ValidationError(f"parameter {k!r}: unsupported value type {type(v).__name__}")
        self._items = tuple(sorted(pairs))
        self._key = _canon(dict(self._items))
        self._hash = hash(self._key)

    def __getitem__(self, key):
        for k, v in self._items:
            if k == key:
                return v
        raise KeyError(key)

    def __iter__(self):
        return (k for k, _ in self._items)

    def __len__(self):
        return len(self._items)

    def __eq__(self, other):
        if isinstance(other, ParameterSet):
            return self._key == other._key
        return NotImplemented

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"ParameterSet({self._key})"

    def canonical(self) -> str:
        return self._key

    def to_dict(self) -> dict:
        return dict(self._items)


EMPTY = ParameterSet()


@dataclass(frozen=True)
class WorldState:
    """Active state plus its parameters and an environment snapshot."""

    state: StateId
    state_params: ParameterSet = EMPTY
    env_params: ParameterSet = EMPTY

    def to_dict(self) -> dict:
        return {
            "state": str(self.state),
            "phi": self.state_params.to_dict(),
            "psi": self.env_params.to_dict(),
        }


@dataclass(frozen=True)
class TransitionRecord:
    src: int
    dst: int
    count: int


@dataclass(frozen=True)
class StoreSnapshot:
    """Immutable copy of a store: states plus COO-style count arrays."""

    states: tuple[WorldState, ...]
    src: np.ndarray
    dst: np.ndarray
    counts: np.ndarray
    snapshot_id: int

    @property
    def n(self) -> int:
        return len(self.states)


class WorldStore:
    """Interned world states and transition counts, grown online.

    Single writer, many readers: writers take the lock, readers work on
    :meth:`snapshot` copies.
    """

    def __init__(self):
        self._states: list[WorldState] = []
        self._index: dict[WorldState, int] = {}
        self._out: list[dict[int, int]] = []
        self._total = 0
        self._version = 0
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._states)

    @property
    def total_count(self) -> int:
        return self._total

    @property
    def states(self) -> list[WorldState]:
        return list(self._states)

    def world_state(self, wid: int) -> WorldState:
        self._check(wid)
        return self._states[wid]

    def lookup(self, ws: WorldState) -> Optional[int]:
        return self._index.get(ws)

    def intern(self, ws: WorldState) -> int:
        with self._lock:
            wid = self._index.get(ws)
            if wid is None:
                wid = len(self._states)
                self._states.append(ws)
                self._index[ws] = wid
                self._out.append({})
                self._version += 1
            return wid

    def record_transition(self, src: int, dst: int, count: int = 1) -> TransitionRecord:
        with self._lock:
            self._check(src)
            self._check(dst)
            row = self._out[src]
            row[dst] = row.get(dst, 0) + count
            self._total += count
            self._version += 1
            return TransitionRecord(src, dst, row[dst])

    def outgoing(self, src: int) -> list[tuple[int, int]]:
        self._check(src)
        return sorted(self._out[src].items())

    def records(self) -> list[TransitionRecord]:
        return [
            TransitionRecord(s, d, c)
            for s, row in enumerate(self._out)
            for d, c in sorted(row.items())
        ]

    def snapshot(self) -> StoreSnapshot:
        with self._lock:
            recs = self.records()
            return StoreSnapshot(
                states=tuple(self._states),
                src=np.fromiter((r.src for r in recs), dtype=np.int64, count=len(recs)),
                dst=np.fromiter((r.dst for r in recs), dtype=np.int64, count=len(recs)),
                counts=np.fromiter((r.count for r in recs), dtype=np.int64, count=len(recs)),
                snapshot_id=self._version,
            )

    def copy(self) -> "WorldStore":
        other = WorldStore()
        for ws in self._states:
            other.intern(ws)
        for r in self.records():
            other.record_transition(r.src, r.dst, r.count)
        return other

    def merge(self, other: "WorldStore") -> None:
        """Add ``other``'s counts into this store (world states matched by value)."""
        remap = [self.intern(ws) for ws in other._states]
        for r in other.records():
            self.record_transition(remap[r.src], remap[r.dst], r.count)

    def _check(self, wid: int):
        if not isinstance(wid, (int, np.integer)) or not 0 <= wid < len(self._states):
            raise UnknownWorldStateId(wid)

    # -- persistence -----------------------------------------------------
    def dumps(self) -> str:
        lines = [_canon({"format": FORMAT_NAME, "version": FORMAT_VERSION})]
        for i, ws in enumerate(self._states):
            lines.append(_canon({"kind": "ws", "id": i, **ws.to_dict()}))
        for r in self.records():
            lines.append(_canon({"kind": "tr", "from": r.src, "to": r.dst, "count": r.count}))
        return "\n".join(lines) + "\n"

    def save(self, path: Union[str, Path]) -> None:
        try:
            Path(path).write_text(self.dumps(), newline="\n")
        except OSError as exc:
            raise IoFailure(f"{path}: {exc.strerror or exc}") from exc

    @classmethod
    def loads(cls, text: str) -> "WorldStore":
        lines = [ln for ln in text.split("\n") if ln.strip()]
        if not lines:
            raise CorruptDatabase("missing header line")
        try:
            objs = [json.loads(ln) for ln in lines]
        except json.JSONDecodeError as exc:
            raise CorruptDatabase(f"line is not JSON: {exc}") from exc
        header = objs[0]
        if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
            raise CorruptDatabase("bad header")
        if header.get("version") != FORMAT_VERSION:
            raise CorruptDatabase(f"unsupported version {header.get('version')!r}")

        store = cls()
        seen_pairs: set[tuple[int, int]] = set()
        in_records = False
        for lineno, obj in enumerate(objs[1:], start=2):
            if not isinstance(obj, dict):
                raise CorruptDatabase(f"line {lineno}: expected an object")
            kind = obj.get("kind")
            try:
                if kind == "ws":
                    if in_records:
                        raise CorruptDatabase(f"line {lineno}: world state after records")
                    if set(obj) != {"kind", "id", "state", "phi", "psi"}:
                        raise CorruptDatabase(f"line {lineno}: bad world-state fields")
                    ws = WorldState(
                        StateId.parse(obj["state"]),
                        ParameterSet(obj["phi"]),
                        ParameterSet(obj["psi"]),
                    )
                    if obj["id"] != len(store) or type(obj["id"]) is not int:
                        raise CorruptDatabase(f"line {lineno}: id {obj['id']!r} out of order")
                    if store.lookup(ws) is not None:
                        raise CorruptDatabase(f"line {lineno}: duplicate world state")
                    store.intern(ws)
                elif kind == "tr":
                    in_records = True
                    if set(obj) != {"kind", "from", "to", "count"}:
                        raise CorruptDatabase(f"line {lineno}: bad record fields")
                    src, dst, count = obj["from"], obj["to"], obj["count"]
                    if not all(type(v) is int for v in (src, dst, count)):
                        raise CorruptDatabase(f"line {lineno}: non-integer field")
                    if count < 1:
                        raise CorruptDatabase(f"line {lineno}: count must be >= 1")
                    if (src, dst) in seen_pairs:
                        raise CorruptDatabase(f"line {lineno}: duplicate record {src}->{dst}")
                    seen_pairs.add((src, dst))
                    store.record_transition(src, dst, count)
                else:
                    raise CorruptDatabase(f"line {lineno}: unknown kind {kind!r}")
            except CorruptDatabase:
                raise
            except (ValidationError, TypeError, AttributeError) as exc:
                raise CorruptDatabase(f"line {lineno}: {exc}") from exc
        return store

    @classmethod
    def load(cls, path: Union[str, Path]) -> "WorldStore":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise IoFailure(f"{path}: {exc.strerror or exc}") from exc
        return cls.loads(text)


def save(store: WorldStore, path) -> None:
    store.save(path)


def load(path) -> WorldStore:
    return WorldStore.load(path)

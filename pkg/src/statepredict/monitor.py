"""Execution monitoring: transition logging, pub-sub delivery, change detection."""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .errors import MissingEnvironmentKey
from .statechart import StateId, TransitionDef
from .worldstore import EMPTY, ParameterSet

DEFAULT_ENV_KEYS = ("human_present", "human_action", "human_id", "object_location")


@dataclass(frozen=True)
class TransitionEvent:
    fired: TransitionDef
    from_leaf: StateId
    to_leaf: StateId
    state_params: ParameterSet = EMPTY
    env_snapshot: ParameterSet = EMPTY
    sequence_no: int = 0


@dataclass(frozen=True)
class LoggerConfig:
    enabled: bool = True
    important_states: frozenset[StateId] = frozenset()


def nearest_important(state: StateId, important: frozenset[StateId]) -> Optional[StateId]:
    """Innermost important ancestor-or-self of ``state``, if any."""
    for k in range(len(state.path), 0, -1):
        cand = StateId(state.path[:k])
        if cand in important:
            return cand
    return None


def log_transition(cfg: LoggerConfig, te: TransitionEvent) -> Optional[TransitionEvent]:
    """Pass ``te`` on, relabeled to important states, or drop it."""
    if not cfg.enabled:
        return None
    to_label = nearest_important(te.to_leaf, cfg.important_states)
    if to_label is None:
        return None
    from_label = nearest_important(te.from_leaf, cfg.important_states) or te.from_leaf
    if to_label == te.to_leaf and from_label == te.from_leaf:
        return te
    return replace(te, from_leaf=from_label, to_leaf=to_label)


class Subscription:
    """Ordered, lossless per-subscriber queue."""

    def __init__(self, topic: str):
        self.topic = topic
        self._queue: deque[TransitionEvent] = deque()
        self._cv = threading.Condition()
        self.closed = False

    def _deliver(self, ev: TransitionEvent) -> None:
        with self._cv:
            self._queue.append(ev)
            self._cv.notify()

    def poll(self) -> Optional[TransitionEvent]:
        with self._cv:
            return self._queue.popleft() if self._queue else None

    def drain(self) -> list[TransitionEvent]:
        with self._cv:
            out = list(self._queue)
            self._queue.clear()
            return out

    def get(self, timeout: Optional[float] = None) -> Optional[TransitionEvent]:
        with self._cv:
            if not self._cv.wait_for(lambda: self._queue or self.closed, timeout):
                return None
            return self._queue.popleft() if self._queue else None

    def __iter__(self) -> Iterator[TransitionEvent]:
        while True:
            ev = self.poll()
            if ev is None:
                return
            yield ev

    def close(self) -> None:
        with self._cv:
            self.closed = True
            self._cv.notify_all()


class EventBus:
    """In-process topic bus. Publishing with no subscribers drops the event."""

    def __init__(self):
        self._subs: dict[str, list[Subscription]] = {}
        self._lock = threading.Lock()

    def subscribe(self, topic: str) -> Subscription:
        sub = Subscription(topic)
        with self._lock:
            self._subs.setdefault(topic, []).append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            subs = self._subs.get(sub.topic, [])
            if sub in subs:
                subs.remove(sub)
        sub.close()

    def publish(self, topic: str, ev: TransitionEvent) -> int:
        # the lock also serializes publishers, which keeps per-subscriber order
        with self._lock:
            subs = list(self._subs.get(topic, ()))
            for s in subs:
                s._deliver(ev)
        return len(subs)


_default_bus = EventBus()


def subscribe(topic: str, bus: Optional[EventBus] = None) -> Subscription:
    return (bus or _default_bus).subscribe(topic)


def publish(topic: str, ev: TransitionEvent, bus: Optional[EventBus] = None) -> int:
    return (bus or _default_bus).publish(topic, ev)


class ChangeDetector:
    """Remembers the last important state and reports changes of it."""

    def __init__(self, initial: Optional[StateId] = None):
        self.current = initial

    def feed(self, ev: TransitionEvent) -> Optional[StateId]:
        if ev.to_leaf == self.current:
            return None
        self.current = ev.to_leaf
        return self.current


def state_changed(
    events: Iterable[TransitionEvent], initial: Optional[StateId] = None
) -> Iterator[tuple[StateId, TransitionEvent]]:
    """Yield ``(state, event)`` whenever the filtered active state changes.

    ``events`` is usually a :class:`Subscription`; iterating it drains what
    is currently queued.
    """
    det = ChangeDetector(initial)
    for ev in events:
        changed = det.feed(ev)
        if changed is not None:
            yield changed, ev


def snapshot_environment(env: Mapping[str, object], keys: Sequence[str] = ()) -> ParameterSet:
    try:
        return ParameterSet({k: env[k] for k in keys})
    except KeyError as exc:
        raise MissingEnvironmentKey(exc.args[0]) from None

"""Pick-and-place simulation: statechart, human model, episode runner.

One simulation tick is: the human acts (maybe), then the robot finishes its
current substate (``done``), fails it, or starts/leaves a task. Every change
of the important active state is snapshotted, interned and counted in the
store, and handed to an optional prediction hook.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources as ilr
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import monitor
from .errors import IoFailure, ValidationError
from .monitor import ChangeDetector, EventBus, LoggerConfig, TransitionEvent
from .statechart import EventDef, MachineState, StateId, StateNode, Statechart, TransitionDef, build_statechart, step
from .worldstore import EMPTY, ParameterSet, WorldState, WorldStore

log = logging.getLogger(__name__)

ROOT = StateId(("root",))
IDLE = ROOT.child("Idle")
DIALOG = ROOT.child("Dialog")
PICK = ROOT.child("PickTask")
PLACE = ROOT.child("PlaceTask")
VISUAL_SERVO = PICK.child("VisualServo")

TOPIC = "statechart.transitions"

# robot substate order within each task (happy path)
PICK_FLOW = ("MoveToLocation", "FindObject", "VisualServo", "GraspObject", "LiftObject", "Success")
PLACE_FLOW = ("MoveToLocation", "PlaceObject", "ReleaseGrasp", "LiftHand", "Success")
SERVO_FLOW = ("Approach", "Align")

CANONICAL_SEQUENCE = (
    IDLE,
    *(PICK.child(s) for s in PICK_FLOW),
    *(PLACE.child(s) for s in PLACE_FLOW),
)

ACTIONS = ("enter_stay", "walk_and_grasp", "leave")


def _task(parent: StateId, flow: Sequence[str], extra: Sequence[str] = ()) -> tuple[StateNode, list[TransitionDef]]:
    children, trans = [], []
    names = list(flow) + list(extra) + ["Failure"]
    for name in names:
        sid = parent.child(name)
        kind = "success" if name == "Success" else "failure" if name == "Failure" else "normal"
        node = StateNode(sid, kind=kind)
        if sid == VISUAL_SERVO:
            node.children = [StateNode(sid.child(s), important=False) for s in SERVO_FLOW]
            node.initial_child = sid.child(SERVO_FLOW[0])
            trans.append(TransitionDef(sid.child(SERVO_FLOW[0]), "done", sid.child(SERVO_FLOW[1])))
        children.append(node)
    for a, b in zip(flow, flow[1:]):
        src = parent.child(a)
        if src == VISUAL_SERVO:
            src = src.child(SERVO_FLOW[-1])
        trans.append(TransitionDef(src, "done", parent.child(b)))
    failure = parent.child("Failure")
    # transitions into Failure are left out of the drawing; add one per working leaf
    for node in children:
        for leaf in node.walk():
            if not leaf.children and leaf.kind == "normal":
                trans.append(TransitionDef(leaf.id, "failure", failure))
    task = StateNode(parent, children=children, important=False, initial_child=parent.child(flow[0]))
    return task, trans


def pick_and_place_statechart() -> Statechart:
    """Reconstructed pick-and-place statechart.

    ``Idle -start-> PickTask``; PickTask's Success hands over to PlaceTask;
    GraspObject errors go to GraspErrorHandling, which retries visual
    servoing. A human grasping the robot's object while it still lies on the
    table aborts the pick task into ``Dialog``.
    """
    pick, pick_t = _task(PICK, PICK_FLOW, extra=("GraspErrorHandling",))
    place, place_t = _task(PLACE, PLACE_FLOW)
    root = StateNode(
        ROOT,
        children=[StateNode(IDLE), pick, place, StateNode(DIALOG)],
        important=False,
        initial_child=IDLE,
    )
    trans = pick_t + place_t + [
        TransitionDef(IDLE, "start", PICK),
        TransitionDef(PICK.child("GraspObject"), "grasp_error", PICK.child("GraspErrorHandling")),
        TransitionDef(PICK.child("GraspErrorHandling"), "done", VISUAL_SERVO),
        TransitionDef(PICK, "succeeded", PLACE),
        TransitionDef(PICK, "human_grasp_own", DIALOG),
    ]
    return build_statechart([root], trans)


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class HumanModelConfig:
    """Human behaviour once in the workspace.

    ``p_enter_stay``, ``p_walk_and_grasp`` and ``p_leave`` are the choices at
    each decision point (on arrival and on every tick spent at the entrance).
    ``p_arrival`` is the per-tick chance that an absent human shows up.
    The defaults are illustrative, only keeping "stay near the entrance" the
    most likely action.
    """

    p_enter_stay: float = 0.6
    p_walk_and_grasp: float = 0.25
    p_leave: float = 0.15
    p_grasp_robot_object: float = 0.5
    p_arrival: float = 0.3
    human_ids: tuple[tuple[str, float], ...] = (("human_a", 0.7), ("human_b", 0.3))

    def __post_init__(self):
        for name in ("p_enter_stay", "p_walk_and_grasp", "p_leave", "p_grasp_robot_object", "p_arrival"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name}={v} outside [0, 1]")
        if abs(self.p_enter_stay + self.p_walk_and_grasp + self.p_leave - 1.0) > 1e-9:
            raise ValidationError("p_enter_stay + p_walk_and_grasp + p_leave must sum to 1")
        if not self.human_ids or any(w < 0 for _, w in self.human_ids) or sum(w for _, w in self.human_ids) <= 0:
            raise ValidationError("human_ids needs at least one non-negative weight and a positive total")

    @property
    def action_probabilities(self) -> dict[str, float]:
        return dict(zip(ACTIONS, (self.p_enter_stay, self.p_walk_and_grasp, self.p_leave)))


def _default_important() -> frozenset[StateId]:
    return frozenset(pick_and_place_statechart().important_states)


@dataclass(frozen=True)
class ScenarioConfig:
    human: HumanModelConfig = field(default_factory=HumanModelConfig)
    p_failure_per_substate: float = 0.3
    failures: bool = False
    seed: int = 0
    horizon: int = 3
    important_states: frozenset[StateId] = field(default_factory=_default_important)
    env_keys: tuple[str, ...] = monitor.DEFAULT_ENV_KEYS
    objects: tuple[str, ...] = ("cup", "box")
    target: str = "sidebar"
    profiles: Optional[str] = None
    max_ticks: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.p_failure_per_substate <= 1.0:
            raise ValidationError(f"p_failure_per_substate={self.p_failure_per_substate} outside [0, 1]")
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if not self.objects:
            raise ValidationError("objects must not be empty")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")

    def with_(self, **changes) -> "ScenarioConfig":
        from dataclasses import replace
        return replace(self, **changes)

    def to_dict(self) -> dict:
        h = self.human
        return {
            "human": {
                "p_enter_stay": h.p_enter_stay,
                "p_walk_and_grasp": h.p_walk_and_grasp,
                "p_leave": h.p_leave,
                "p_grasp_robot_object": h.p_grasp_robot_object,
                "p_arrival": h.p_arrival,
                "human_ids": [{"id": i, "weight": w} for i, w in h.human_ids],
            },
            "p_failure_per_substate": self.p_failure_per_substate,
            "failures": self.failures,
            "seed": self.seed,
            "horizon": self.horizon,
            "important_states": sorted(str(s) for s in self.important_states),
            "env_keys": list(self.env_keys),
            "objects": list(self.objects),
            "target": self.target,
            "profiles": self.profiles,
            "max_ticks": self.max_ticks,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        try:
            kw = dict(data)
            if "human" in kw:
                h = dict(kw["human"])
                if "human_ids" in h:
                    h["human_ids"] = tuple((e["id"], float(e["weight"])) for e in h["human_ids"])
                kw["human"] = HumanModelConfig(**h)
            if "important_states" in kw:
                kw["important_states"] = frozenset(StateId.parse(s) for s in kw["important_states"])
            for key in ("env_keys", "objects"):
                if key in kw:
                    kw[key] = tuple(kw[key])
            return cls(**kw)
        except (TypeError, KeyError, AttributeError) as exc:
            raise ValidationError(f"malformed scenario config: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise IoFailure(f"{path}: {exc.strerror or exc}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc

    def save(self, path) -> None:
        try:
            Path(path).write_text(self.dumps())
        except OSError as exc:
            raise IoFailure(f"{path}: {exc.strerror or exc}") from exc


def default_config_text() -> str:
    return ilr.files("statepredict").joinpath("data/scenario.default.json").read_text()


# -- human model -------------------------------------------------------------

@dataclass
class HumanState:
    phase: str = "absent"  # absent | entrance | walking | holding
    human_id: str = "none"
    action: str = "none"
    decisions: Counter = field(default_factory=Counter)

    @property
    def present(self) -> bool:
        return self.phase != "absent"


def decide_action(rng: random.Random, cfg: HumanModelConfig) -> str:
    u = rng.random()
    if u < cfg.p_enter_stay:
        return "enter_stay"
    if u < cfg.p_enter_stay + cfg.p_walk_and_grasp:
        return "walk_and_grasp"
    return "leave"


def human_step(
    rng: random.Random, cfg: HumanModelConfig, hs: HumanState, object_on_table: bool = True
) -> Optional[EventDef]:
    """Advance the human one tick; returns the event describing what they did."""
    if hs.phase == "absent":
        if rng.random() >= cfg.p_arrival:
            return None
        ids, weights = zip(*cfg.human_ids)
        hs.human_id = rng.choices(ids, weights)[0]
        hs.phase = "entrance"

    name = "human_update"
    if hs.phase == "entrance":
        choice = decide_action(rng, cfg)
        hs.decisions[choice] += 1
        if choice == "enter_stay":
            hs.action = "at_entrance"
        elif choice == "walk_and_grasp":
            hs.phase, hs.action = "walking", "walking_to_table"
        else:
            hs.phase, hs.action = "absent", "left"
    elif hs.phase == "walking":
        own = object_on_table and rng.random() < cfg.p_grasp_robot_object
        hs.phase = "holding"
        hs.action = "grasp_robot_object" if own else "grasp_other_object"
        name = "human_grasp_own" if own else "human_grasp_other"
    elif hs.phase == "holding":
        hs.phase, hs.action = "absent", "left"

    payload = ParameterSet({"human_action": hs.action, "human_id": hs.human_id})
    if hs.phase == "absent":
        hs.human_id, hs.action = "none", "none"
    return EventDef(name, payload)


# -- episodes ----------------------------------------------------------------

@dataclass
class EpisodeTrace:
    episode_id: int
    events: list[TransitionEvent]
    outcome: str
    visited: list[WorldState] = field(default_factory=list)

    @property
    def important_sequence(self) -> list[StateId]:
        return [ws.state for ws in self.visited]

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "outcome": self.outcome,
            "events": [
                {
                    "seq": e.sequence_no,
                    "event": e.fired.event_name,
                    "from": str(e.from_leaf),
                    "to": str(e.to_leaf),
                    "phi": e.state_params.to_dict(),
                    "psi": e.env_snapshot.to_dict(),
                }
                for e in self.events
            ],
            "visited": [ws.to_dict() for ws in self.visited],
        }


PredictHook = Callable[[int, WorldState], None]

_CHART: Optional[Statechart] = None


def _chart() -> Statechart:
    global _CHART
    if _CHART is None:
        _CHART = pick_and_place_statechart()
    return _CHART


def _is_episode_end(sc: Statechart, leaf: StateId) -> bool:
    node = sc.node(leaf)
    if node.kind == "failure":
        return True
    if node.kind == "success":
        return "succeeded" not in sc.handled_events(leaf)
    return not sc.handled_events(leaf)


def _outcome(sc: Statechart, leaf: StateId) -> str:
    kind = sc.node(leaf).kind
    if kind in ("success", "failure"):
        return kind
    return "aborted_by_human"


def run_episode(
    cfg: ScenarioConfig,
    store: WorldStore,
    rng: random.Random,
    predict_hook: Optional[PredictHook] = None,
    *,
    episode_id: int = 0,
    learn: bool = True,
    statechart: Optional[Statechart] = None,
    bus: Optional[EventBus] = None,
) -> EpisodeTrace:
    sc = statechart or _chart()
    bus = bus or EventBus()
    sub = bus.subscribe(TOPIC)
    logger = LoggerConfig(True, cfg.important_states)
    p_fail = cfg.p_failure_per_substate if cfg.failures else 0.0

    ms: MachineState = sc.start()
    human = HumanState()
    env = {"human_present": False, "human_action": "none", "human_id": "none", "object_location": "table"}
    obj = rng.choice(cfg.objects)
    task_phi = ParameterSet({"object": obj, "target": cfg.target})

    def phi(state: StateId) -> ParameterSet:
        return task_phi if (PICK.is_ancestor_or_self(state) or PLACE.is_ancestor_or_self(state)) else EMPTY

    def world_state(label: StateId) -> WorldState:
        return WorldState(label, phi(label), monitor.snapshot_environment(env, cfg.env_keys))

    start_label = monitor.nearest_important(ms.active, cfg.important_states) or ms.active
    det = ChangeDetector(start_label)
    first = world_state(start_label)
    prev_id = store.intern(first)
    visited = [first]
    events: list[TransitionEvent] = []

    def fire(ev: EventDef) -> None:
        nonlocal ms, prev_id
        new_ms, t = step(ms, ev)
        if t is None:
            return
        leaf = new_ms.active
        if leaf == PICK.child("LiftObject"):
            env["object_location"] = "gripper"
        elif leaf == PLACE.child("ReleaseGrasp"):
            env["object_location"] = cfg.target
        te = TransitionEvent(
            t, ms.active, leaf, phi(leaf), monitor.snapshot_environment(env, cfg.env_keys), len(events) + 1
        )
        ms = new_ms
        events.append(te)
        logged = monitor.log_transition(logger, te)
        if logged is not None:
            bus.publish(TOPIC, logged)
        for published in sub:
            label = det.feed(published)
            if label is None:
                continue
            ws = WorldState(label, phi(label), published.env_snapshot)
            wid = store.intern(ws)
            if learn:
                store.record_transition(prev_id, wid)
            prev_id = wid
            visited.append(ws)
            if predict_hook is not None:
                predict_hook(wid, ws)

    for _ in range(cfg.max_ticks):
        if _is_episode_end(sc, ms.active):
            break
        hev = human_step(rng, cfg.human, human, object_on_table=env["object_location"] == "table")
        if hev is not None:
            env["human_present"] = human.present
            env["human_action"] = human.action
            env["human_id"] = human.human_id
            fire(hev)
            if _is_episode_end(sc, ms.active):
                break

        leaf = ms.active
        handled = sc.handled_events(leaf)
        if sc.node(leaf).kind == "success":
            fire(EventDef("succeeded"))
        elif leaf == IDLE:
            fire(EventDef("start"))
        elif p_fail and rng.random() < p_fail:
            fire(EventDef("grasp_error" if "grasp_error" in handled else "failure"))
        else:
            fire(EventDef("done"))
    else:
        log.warning("episode %d hit max_ticks=%d, forcing failure", episode_id, cfg.max_ticks)
        fire(EventDef("failure"))

    bus.unsubscribe(sub)
    return EpisodeTrace(episode_id, events, _outcome(sc, ms.active), visited)


def train(cfg: ScenarioConfig, store: WorldStore, rng: random.Random, n_episodes: int) -> list[str]:
    """Run ``n_episodes`` learning episodes; returns their outcomes."""
    if n_episodes < 1:
        raise ValidationError("n_episodes must be >= 1")
    outcomes = []
    for i in range(n_episodes):
        outcomes.append(run_episode(cfg, store, rng, episode_id=i).outcome)
    log.info("trained %d episodes: %s", n_episodes, dict(Counter(outcomes)))
    return outcomes

"""CPU/memory profiles per statechart state and per-step resource envelopes."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

from .errors import InvalidThreshold, IoFailure, ValidationError
from .predictor import PredictionStep
from .statechart import StateId
from .worldstore import WorldState, WorldStore

CPU_MAX = 100.0
MEM_MAX = 1000.0
DEFAULT_THRESHOLD = 0.75
# slack for float round-off when comparing cumulative sums with the threshold
_EPS = 1e-12

CSV_HEADER = ["step", "cpu_min", "cpu_most", "cpu_max", "mem_min", "mem_most", "mem_max", "covered_probability"]


@dataclass(frozen=True)
class ResourceProfile:
    cpu_percent: float
    memory_mb: float

    def __post_init__(self):
        if not 0.0 <= self.cpu_percent <= CPU_MAX:
            raise ValidationError(f"cpu_percent {self.cpu_percent} outside [0, {CPU_MAX}]")
        if not 0.0 <= self.memory_mb <= MEM_MAX:
            raise ValidationError(f"memory_mb {self.memory_mb} outside [0, {MEM_MAX}]")


@dataclass
class ProfileTable:
    profiles: dict[StateId, ResourceProfile] = field(default_factory=dict)
    default: ResourceProfile = ResourceProfile(0.0, 0.0)

    def lookup(self, state: StateId) -> ResourceProfile:
        return self.profiles.get(state, self.default)

    def to_dict(self) -> dict:
        out = {str(k): {"cpu_percent": v.cpu_percent, "memory_mb": v.memory_mb} for k, v in self.profiles.items()}
        out["default"] = {"cpu_percent": self.default.cpu_percent, "memory_mb": self.default.memory_mb}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProfileTable":
        try:
            def prof(d):
                return ResourceProfile(float(d["cpu_percent"]), float(d["memory_mb"]))

            profiles = {StateId.parse(k): prof(v) for k, v in data.items() if k != "default"}
            default = prof(data["default"]) if "default" in data else ResourceProfile(0.0, 0.0)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed profile table: {exc}") from exc
        return cls(profiles, default)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path) -> None:
        try:
            Path(path).write_text(self.dumps())
        except OSError as exc:
            raise IoFailure(f"{path}: {exc.strerror or exc}") from exc

    @classmethod
    def load(cls, path) -> "ProfileTable":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise IoFailure(f"{path}: {exc.strerror or exc}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc


def default_profiles() -> ProfileTable:
    """Illustrative profiles for the pick-and-place scenario.

    These are made-up numbers that only respect qualitative relations
    (visual servoing is CPU heavy, Success costs nothing, Failure is cheaper
    than GraspErrorHandling which is cheaper than LiftObject). They are not
    measurements.
    """
    pick = StateId(("root", "PickTask"))
    place = StateId(("root", "PlaceTask"))
    raw = {
        StateId(("root", "Idle")): (2, 50),
        StateId(("root", "Dialog")): (15, 200),
        pick.child("MoveToLocation"): (35, 300),
        pick.child("FindObject"): (60, 550),
        pick.child("VisualServo"): (90, 700),
        pick.child("GraspObject"): (75, 450),
        pick.child("LiftObject"): (55, 350),
        pick.child("GraspErrorHandling"): (40, 300),
        pick.child("Success"): (0, 0),
        pick.child("Failure"): (10, 100),
        place.child("MoveToLocation"): (35, 300),
        place.child("PlaceObject"): (65, 500),
        place.child("ReleaseGrasp"): (30, 250),
        place.child("LiftHand"): (25, 200),
        place.child("Success"): (0, 0),
        place.child("Failure"): (10, 100),
    }
    return ProfileTable({k: ResourceProfile(float(c), float(m)) for k, (c, m) in raw.items()}, ResourceProfile(5.0, 100.0))


@dataclass(frozen=True)
class EnvelopeStep:
    step: int
    cpu: tuple[float, float, float]  # (min, most probable, max)
    mem: tuple[float, float, float]
    covered_probability: float
    selected: tuple[int, ...] = ()


def select_prefix(ps: PredictionStep, threshold: float = DEFAULT_THRESHOLD) -> tuple[list[int], float]:
    """Shortest prefix of the ranked distribution with mass >= threshold."""
    if not 0.0 < threshold <= 1.0:
        raise InvalidThreshold(f"threshold must be in (0, 1], got {threshold}")
    chosen, total = [], 0.0
    for wid, p in ps.ranked():
        chosen.append(wid)
        total += p
        if total >= threshold - _EPS:
            break
    return chosen, total


def envelope(
    steps: Sequence[PredictionStep],
    table: ProfileTable,
    states: Union[WorldStore, Sequence[WorldState]],
    threshold: float = DEFAULT_THRESHOLD,
) -> list[EnvelopeStep]:
    if not 0.0 < threshold <= 1.0:
        raise InvalidThreshold(f"threshold must be in (0, 1], got {threshold}")
    if isinstance(states, WorldStore):
        states = states.states
    out = []
    for ps in steps:
        chosen, covered = select_prefix(ps, threshold)
        profs = [table.lookup(states[w].state) for w in chosen]
        most = table.lookup(states[ps.top].state)
        cpus = [p.cpu_percent for p in profs]
        mems = [p.memory_mb for p in profs]
        out.append(EnvelopeStep(
            ps.step,
            (min(cpus), most.cpu_percent, max(cpus)),
            (min(mems), most.memory_mb, max(mems)),
            covered,
            tuple(chosen),
        ))
    return out


def envelope_csv(env: Sequence[EnvelopeStep]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for e in env:
        w.writerow([e.step, *(f"{v:.6f}" for v in (*e.cpu, *e.mem, e.covered_probability))])
    return buf.getvalue()


def export_envelope(env: Sequence[EnvelopeStep], path) -> None:
    try:
        Path(path).write_text(envelope_csv(env), newline="\n")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from exc

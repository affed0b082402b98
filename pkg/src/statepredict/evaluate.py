"""Prediction-precision evaluation (S-Match / W-Match, with and without failures)."""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import EmptyStore, IoFailure, ValidationError
from .predictor import build_matrix, predict
from .resources import DEFAULT_THRESHOLD, EnvelopeStep, ProfileTable, envelope
from .scenario import ScenarioConfig, run_episode
from .worldstore import WorldState, WorldStore

CRITERIA = ("s_match", "w_match")
CSV_HEADER = ["criterion", "failures_enabled", "total", "correct", "precision_percent"]


def score(predicted: WorldState, actual: WorldState, criterion: str) -> bool:
    if criterion == "s_match":
        return predicted.state == actual.state
    if criterion == "w_match":
        return predicted == actual
    raise ValidationError(f"unknown criterion {criterion!r}")


def parse_criteria(text: str) -> tuple[str, ...]:
    return {"s": ("s_match",), "w": ("w_match",), "both": CRITERIA}[text]


@dataclass
class ReportRow:
    criterion: str
    failures_enabled: bool
    total: int = 0
    correct: int = 0
    # sum over triggers of the probability given to the state that actually came next
    p_actual_sum: float = 0.0

    @property
    def precision_percent(self) -> float:
        return 100.0 * self.correct / self.total if self.total else 0.0

    @property
    def expected_precision_percent(self) -> float:
        return 100.0 * self.p_actual_sum / self.total if self.total else 0.0


@dataclass
class EvalReport:
    rows: list[ReportRow]
    config_digest: str
    seed: int
    envelopes: list[tuple[str, list[EnvelopeStep]]] = field(default_factory=list)

    def row(self, criterion: str, failures: bool) -> ReportRow:
        for r in self.rows:
            if r.criterion == criterion and r.failures_enabled == failures:
                return r
        raise KeyError((criterion, failures))

    def merged(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(self.rows + other.rows, self.config_digest, self.seed, self.envelopes + other.envelopes)

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "seed": self.seed,
            "rows": [
                {
                    "criterion": r.criterion,
                    "failures_enabled": r.failures_enabled,
                    "total": r.total,
                    "correct": r.correct,
                    "precision_percent": round(r.precision_percent, 6),
                    "expected_precision_percent": round(r.expected_precision_percent, 6),
                }
                for r in self.rows
            ],
        }


def evaluate(
    cfg: ScenarioConfig,
    store: WorldStore,
    n_eval_episodes: int,
    criteria: Sequence[str] = CRITERIA,
    failures: bool = False,
    rng: Optional[random.Random] = None,
    *,
    learn: bool = True,
    profiles: Optional[ProfileTable] = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> EvalReport:
    """Run instrumented episodes and score every step-1 prediction.

    Each important-state change triggers a horizon-``cfg.horizon``
    prediction from the freshly learned store. Its step-1 top world state is
    compared with the next important world state actually reached. The
    store keeps learning unless ``learn`` is False.
    """
    if len(store) == 0:
        raise EmptyStore("evaluation needs a trained store")
    if n_eval_episodes < 1:
        raise ValidationError("n_eval_episodes must be >= 1")
    for c in criteria:
        if c not in CRITERIA:
            raise ValidationError(f"unknown criterion {c!r}")
    rng = rng if rng is not None else random.Random(cfg.seed)
    run_cfg = cfg.with_(failures=failures)
    rows = {c: ReportRow(c, failures) for c in criteria}
    envelopes: list[tuple[str, list[EnvelopeStep]]] = []
    pending: list = [None]  # (top world state, step-1 distribution)

    def hook(wid: int, ws: WorldState) -> None:
        if pending[0] is not None:
            top_ws, dist = pending[0]
            actual = store.lookup(ws)
            p_actual = float(dist[actual]) if actual is not None and actual < len(dist) else 0.0
            for c, row in rows.items():
                row.total += 1
                row.correct += score(top_ws, ws, c)
                if c == "s_match":
                    row.p_actual_sum += sum(
                        float(dist[i]) for i in range(len(dist)) if store.world_state(i).state == ws.state
                    )
                else:
                    row.p_actual_sum += p_actual
        m = build_matrix(store.snapshot())
        steps = predict(wid, cfg.horizon, m)
        pending[0] = (store.world_state(steps[0].top), steps[0].distribution)
        if profiles is not None:
            envelopes.append((str(ws.state), envelope(steps, profiles, store, threshold)))

    for i in range(n_eval_episodes):
        pending[0] = None
        run_episode(run_cfg, store, rng, hook, episode_id=i, learn=learn)
    return EvalReport(list(rows.values()), cfg.digest(), cfg.seed, envelopes)


def evaluate_conditions(
    cfg: ScenarioConfig,
    store: WorldStore,
    n_eval_episodes: int,
    rng: Optional[random.Random] = None,
    criteria: Sequence[str] = CRITERIA,
) -> EvalReport:
    """Both failure conditions, each evaluated on its own copy of ``store``."""
    rng = rng if rng is not None else random.Random(cfg.seed)
    plain = evaluate(cfg, store.copy(), n_eval_episodes, criteria, False, rng)
    with_e = evaluate(cfg, store.copy(), n_eval_episodes, criteria, True, rng)
    return plain.merged(with_e)


def report_csv(r: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in r.rows:
        w.writerow([row.criterion, str(row.failures_enabled).lower(), row.total, row.correct, f"{row.precision_percent:.6f}"])
    return buf.getvalue()


def _write(path, text: str) -> None:
    try:
        Path(path).write_text(text, newline="\n")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from exc


def report_table(r: EvalReport, path) -> None:
    _write(path, report_csv(r))


def report_json(r: EvalReport, path) -> None:
    _write(path, json.dumps(r.to_dict(), sort_keys=True, indent=2) + "\n")


def mean_precision(reports: Iterable[EvalReport], criterion: str, failures: bool) -> float:
    vals = [r.row(criterion, failures).precision_percent for r in reports]
    return sum(vals) / len(vals)

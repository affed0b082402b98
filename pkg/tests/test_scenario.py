import json
import random
from collections import Counter
from dataclasses import replace

import pytest

from statepredict.errors import ValidationError
from statepredict.scenario import (
    CANONICAL_SEQUENCE,
    DIALOG,
    IDLE,
    PICK,
    HumanModelConfig,
    HumanState,
    ScenarioConfig,
    default_config_text,
    human_step,
    pick_and_place_statechart,
    run_episode,
    train,
)
from statepredict.worldstore import WorldStore

QUIET = HumanModelConfig(p_arrival=0.0)


def test_starts_idle(chart):
    assert chart.start().active == IDLE


def test_happy_path_follows_canonical_sequence():
    trace = run_episode(ScenarioConfig(human=QUIET), WorldStore(), random.Random(3))
    assert trace.outcome == "success"
    assert tuple(trace.important_sequence) == CANONICAL_SEQUENCE
    seqs = [e.sequence_no for e in trace.events]
    assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
    assert all(e.from_leaf != e.to_leaf for e in trace.events)


def test_forced_failure_hits_first_substate():
    cfg = ScenarioConfig(human=QUIET, failures=True, p_failure_per_substate=1.0)
    trace = run_episode(cfg, WorldStore(), random.Random(0))
    assert trace.outcome == "failure"
    assert [str(s) for s in trace.important_sequence] == [
        "root/Idle", "root/PickTask/MoveToLocation", "root/PickTask/Failure"]


def test_human_grasp_of_robot_object_aborts():
    human = HumanModelConfig(p_enter_stay=0.0, p_walk_and_grasp=1.0, p_leave=0.0,
                             p_grasp_robot_object=1.0, p_arrival=1.0)
    trace = run_episode(ScenarioConfig(human=human), WorldStore(), random.Random(0))
    assert trace.outcome == "aborted_by_human"
    assert trace.important_sequence[-1] == DIALOG
    assert trace.visited[-1].env_params["human_action"] == "grasp_robot_object"


def test_abort_during_visual_servo():
    # human arrives on the tick the robot is in VisualServo and grasps the next tick
    cfg = ScenarioConfig()
    found = False
    for seed in range(300):
        trace = run_episode(cfg, WorldStore(), random.Random(seed))
        seq = trace.important_sequence
        if trace.outcome == "aborted_by_human" and seq[-2] == PICK.child("VisualServo"):
            found = True
            break
    assert found


def test_grasp_of_other_object_lets_robot_continue():
    human = HumanModelConfig(p_enter_stay=0.0, p_walk_and_grasp=1.0, p_leave=0.0,
                             p_grasp_robot_object=0.0, p_arrival=1.0)
    trace = run_episode(ScenarioConfig(human=human), WorldStore(), random.Random(0))
    assert trace.outcome == "success"
    assert tuple(trace.important_sequence) == CANONICAL_SEQUENCE


def test_no_grasp_events_when_walk_probability_zero():
    human = HumanModelConfig(p_enter_stay=0.8, p_walk_and_grasp=0.0, p_leave=0.2, p_arrival=0.5)
    rng = random.Random(5)
    hs = HumanState()
    names = Counter()
    for _ in range(5000):
        ev = human_step(rng, human, hs)
        if ev:
            names[ev.name] += 1
    assert names["human_grasp_own"] == names["human_grasp_other"] == 0
    assert names["human_update"] > 0


def test_human_seeded_determinism():
    def run(seed):
        rng, hs = random.Random(seed), HumanState()
        return [human_step(rng, HumanModelConfig(), hs) for _ in range(200)]

    assert run(9) == run(9)
    assert run(9) != run(10)


def test_human_action_frequencies():
    cfg = HumanModelConfig()
    rng, hs = random.Random(2024), HumanState()
    while sum(hs.decisions.values()) < 10_000:
        human_step(rng, cfg, hs)
    total = sum(hs.decisions.values())
    for action, p in cfg.action_probabilities.items():
        assert abs(hs.decisions[action] / total - p) <= 0.02


def test_event_payload_carries_action_and_id():
    rng, hs = random.Random(1), HumanState()
    human = HumanModelConfig(p_arrival=1.0)
    ev = human_step(rng, human, hs)
    assert set(ev.payload) == {"human_action", "human_id"}
    assert ev.payload["human_id"] in ("human_a", "human_b")


def test_terminal_states_absorb(chart):
    cfg = ScenarioConfig(failures=True)
    for seed in range(50):
        trace = run_episode(cfg, WorldStore(), random.Random(seed))
        terminal_at = [i for i, e in enumerate(trace.events)
                       if chart.node(e.to_leaf).kind == "failure"
                       or (e.to_leaf.name == "Success" and e.to_leaf.parent.name == "PlaceTask")
                       or e.to_leaf == DIALOG]
        assert terminal_at == [len(trace.events) - 1]


def test_train_single_happy_episode():
    store = WorldStore()
    train(ScenarioConfig(human=QUIET), store, random.Random(0), 1)
    assert len(store) == len(CANONICAL_SEQUENCE)
    assert all(r.count == 1 for r in store.records())
    assert store.total_count == len(CANONICAL_SEQUENCE) - 1


def test_train_covers_backbone(trained_store):
    by_state = {}
    for i, ws in enumerate(trained_store.states):
        by_state.setdefault(ws.state, []).append(i)
    for a, b in zip(CANONICAL_SEQUENCE, CANONICAL_SEQUENCE[1:]):
        total = sum(c for i in by_state[a] for j, c in trained_store.outgoing(i) if j in by_state[b])
        assert total >= 1, (a, b)


def test_train_deterministic(tmp_path):
    paths = []
    for k in range(2):
        store = WorldStore()
        train(ScenarioConfig(seed=4), store, random.Random(4), 30)
        p = tmp_path / f"{k}.wsdb.jsonl"
        store.save(p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_train_rejects_zero():
    with pytest.raises(ValidationError):
        train(ScenarioConfig(), WorldStore(), random.Random(0), 0)


def test_predict_hook_called_per_change():
    calls = []
    trace = run_episode(ScenarioConfig(human=QUIET), WorldStore(), random.Random(0),
                        lambda wid, ws: calls.append(ws.state))
    assert calls == trace.important_sequence[1:]


def test_w_match_sees_different_humans(trained_store):
    ids = {ws.env_params["human_id"] for ws in trained_store.states}
    assert {"human_a", "human_b"} <= ids


def test_config_validation_and_round_trip(tmp_path):
    with pytest.raises(ValidationError):
        HumanModelConfig(p_enter_stay=0.5)
    with pytest.raises(ValidationError):
        ScenarioConfig(p_failure_per_substate=1.5)
    with pytest.raises(ValidationError):
        ScenarioConfig(horizon=0)
    cfg = replace(ScenarioConfig(), seed=99, failures=True)
    p = tmp_path / "c.json"
    cfg.save(p)
    assert ScenarioConfig.load(p) == cfg
    assert ScenarioConfig.from_dict(json.loads(default_config_text())) == ScenarioConfig()


def test_root_default_config_matches_bundled():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "scenario.default.json"
    assert root.read_text() == default_config_text()


def test_statechart_is_rebuilt_identically():
    assert pick_and_place_statechart().dumps() == pick_and_place_statechart().dumps()

"""``statepredict`` command line.

Subcommands: simulate, train, predict, evaluate, export-profiles.
Exit codes: 0 ok, 1 validation error, 2 I/O error. Failures are reported on
stderr as ``error:<category>:<message>``. Logging verbosity comes from
``STATEPREDICT_LOG`` (off, info, debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import evaluate as ev
from .errors import InvalidThreshold, IoFailure, StatePredictError, ValidationError
from .predictor import build_matrix, export_prediction, occupancy_vector, predict, predict_distribution
from .resources import DEFAULT_THRESHOLD, ProfileTable, default_profiles, envelope, export_envelope
from .scenario import ScenarioConfig, default_config_text, run_episode, train
from .statechart import StateId
from .worldstore import ParameterSet, WorldState, WorldStore

log = logging.getLogger("statepredict")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"error:validation:{message}\n")


def _setup_logging() -> None:
    level = os.environ.get("STATEPREDICT_LOG", "off").lower()
    if level == "off":
        logging.getLogger("statepredict").addHandler(logging.NullHandler())
        logging.getLogger("statepredict").setLevel(logging.ERROR)
        return
    logging.basicConfig(
        level=logging.DEBUG if level == "debug" else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _scalar(text: str):
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        return text


def _params(pairs: Optional[Sequence[str]]) -> ParameterSet:
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise ValidationError(f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k] = _scalar(v)
    return ParameterSet(out)


def _config(args) -> ScenarioConfig:
    if args.config:
        cfg = ScenarioConfig.load(args.config)
    else:
        cfg = ScenarioConfig.from_dict(json.loads(default_config_text()))
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "horizon", None) is not None:
        changes["horizon"] = args.horizon
    if getattr(args, "failures", False):
        changes["failures"] = True
    return cfg.with_(**changes) if changes else cfg


def _profiles(path: Optional[str], cfg: Optional[ScenarioConfig] = None) -> ProfileTable:
    path = path or (cfg.profiles if cfg else None)
    return ProfileTable.load(path) if path else default_profiles()


def _write(path, text: str) -> None:
    try:
        Path(path).write_text(text, newline="\n")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from exc


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args)
    store = WorldStore.load(args.db) if args.db and Path(args.db).exists() and args.resume else WorldStore()
    rng = random.Random(cfg.seed)
    lines = []
    for i in range(args.episodes):
        trace = run_episode(cfg, store, rng, episode_id=i)
        lines.append(json.dumps(trace.to_dict(), sort_keys=True, separators=(",", ":")))
        print(f"episode {i}: {trace.outcome} ({len(trace.visited)} important states)")
    if args.out:
        _write(args.out, "\n".join(lines) + "\n")
    if args.db:
        store.save(args.db)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    store = WorldStore.load(args.db) if args.resume and Path(args.db).exists() else WorldStore()
    outcomes = train(cfg, store, random.Random(cfg.seed), args.episodes)
    store.save(args.db)
    summary = {o: outcomes.count(o) for o in sorted(set(outcomes))}
    print(f"trained {args.episodes} episodes; {len(store)} world states, {store.total_count} transitions; {summary}")
    return EXIT_OK


def cmd_predict(args) -> int:
    if not 0.0 < args.threshold <= 1.0:
        raise InvalidThreshold(f"threshold must be in (0, 1], got {args.threshold}")
    store = WorldStore.load(args.db)
    if len(store) == 0:
        raise ValidationError(f"{args.db}: store is empty")
    state = StateId.parse(args.state)
    m = build_matrix(store.snapshot())
    if args.marginal:
        x = occupancy_vector(store, state)
        if x is None:
            raise ValidationError(f"no world state with state {state} in {args.db}")
        steps = predict_distribution(x, args.horizon, m)
    else:
        ws = WorldState(state, _params(args.phi), _params(args.psi))
        wid = store.lookup(ws)
        if wid is None:
            log.warning("world state not in store; using the uniform distribution")
            print(f"warning: {state} with the given parameters was never observed; prediction is uniform", file=sys.stderr)
            n = len(store)
            steps = predict_distribution(np.full(n, 1.0 / n), args.horizon, m)
        else:
            steps = predict(wid, args.horizon, m)

    for ps in steps:
        top = store.world_state(ps.top)
        print(f"step {ps.step}: {top.state} p={ps.top_probability:.4f}")

    if args.json:
        export_prediction(steps, args.json, store)
    if args.out or args.plot:
        env = envelope(steps, _profiles(args.profiles), store, args.threshold)
        if args.out:
            export_envelope(env, args.out)
        if args.plot:
            from .plotting import plot_envelope

            plot_envelope(env, args.plot, title=str(state))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    store = WorldStore.load(args.db)
    criteria = ev.parse_criteria(args.criterion)
    rng = random.Random(cfg.seed)
    if args.all_conditions:
        report = ev.evaluate_conditions(cfg.with_(failures=False), store, args.episodes, rng, criteria)
    else:
        report = ev.evaluate(cfg, store, args.episodes, criteria, cfg.failures, rng)
    for r in report.rows:
        tag = " + E" if r.failures_enabled else ""
        print(f"{r.criterion}{tag}: {r.correct}/{r.total} = {r.precision_percent:.1f}%")
    if args.out:
        ev.report_table(report, args.out)
    if args.json:
        ev.report_json(report, args.json)
    if args.plot:
        from .plotting import plot_precision

        plot_precision(report, args.plot)
    return EXIT_OK


def cmd_export_profiles(args) -> int:
    table = _profiles(args.profiles)
    table.save(args.out)
    if args.config_out:
        _write(args.config_out, default_config_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="statepredict", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--config", metavar="PATH", help="scenario config JSON (default: bundled scenario.default.json)")
        if seed:
            sp.add_argument("--seed", type=int, metavar="U64", help="RNG seed, overrides the config")

    s = sub.add_parser("simulate", help="run episodes and dump their traces")
    common(s)
    s.add_argument("--episodes", type=int, default=1, metavar="N")
    s.add_argument("--failures", action="store_true", help="inject substate failures (+E condition)")
    s.add_argument("--db", metavar="PATH", help="also write the learned store here")
    s.add_argument("--resume", action="store_true", help="continue learning from an existing --db")
    s.add_argument("--out", metavar="PATH", help="episode traces as JSON lines")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="learn a world-state store from simulated episodes")
    common(t)
    t.add_argument("--episodes", type=int, default=500, metavar="N")
    t.add_argument("--failures", action="store_true", help="inject substate failures while training")
    t.add_argument("--db", required=True, metavar="PATH", help="output .wsdb.jsonl")
    t.add_argument("--resume", action="store_true", help="continue learning from an existing --db")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict from one world state and write the resource envelope")
    pr.add_argument("--db", required=True, metavar="PATH")
    pr.add_argument("--state", required=True, metavar="PATH", help="statechart path, e.g. root/PickTask/VisualServo")
    pr.add_argument("--phi", action="append", metavar="KEY=VALUE", help="state parameter (repeatable)")
    pr.add_argument("--psi", action="append", metavar="KEY=VALUE", help="environment parameter (repeatable)")
    pr.add_argument("--marginal", action="store_true",
                    help="start from all stored world states of --state, weighted by visits")
    pr.add_argument("--horizon", type=int, default=3, metavar="N")
    pr.add_argument("--profiles", metavar="PATH", help="profile table JSON (default: built-in example values)")
    pr.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, metavar="F")
    pr.add_argument("--out", metavar="PATH", help="envelope CSV")
    pr.add_argument("--json", metavar="PATH", help="full per-step distributions as JSON")
    pr.add_argument("--plot", metavar="PATH", help="envelope figure (PNG/PDF/SVG by extension)")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="score step-1 predictions on fresh episodes")
    common(e)
    e.add_argument("--db", required=True, metavar="PATH", help="trained store")
    e.add_argument("--episodes", type=int, default=4, metavar="N", help="evaluation episodes per condition")
    e.add_argument("--horizon", type=int, default=None, metavar="N")
    e.add_argument("--failures", action="store_true", help="evaluate the +E condition")
    e.add_argument("--all-conditions", action="store_true", help="evaluate with and without failures")
    e.add_argument("--criterion", choices=("s", "w", "both"), default="both")
    e.add_argument("--out", metavar="PATH", help="report CSV")
    e.add_argument("--json", metavar="PATH", help="report JSON with config digest")
    e.add_argument("--plot", metavar="PATH", help="precision bar chart")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("export-profiles", help="write the profile table (and optionally the default config)")
    x.add_argument("--profiles", metavar="PATH", help="table to re-export instead of the built-in one")
    x.add_argument("--out", required=True, metavar="PATH")
    x.add_argument("--config-out", metavar="PATH", help="also write the default scenario config")
    x.set_defaults(func=cmd_export_profiles)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or usage errors
        return int(exc.code or 0)
    for name in ("episodes", "horizon"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            print(f"error:validation:--{name} must be >= 1", file=sys.stderr)
            return EXIT_VALIDATION
    try:
        return args.func(args)
    except IoFailure as exc:
        print(f"error:io:{exc}", file=sys.stderr)
        return EXIT_IO
    except StatePredictError as exc:
        print(f"error:{exc.category}:{exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

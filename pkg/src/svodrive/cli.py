"""Command-line entry point: ``svodrive {ingest,synth,train,evaluate,plot}``.

Exit codes: 0 success, 2 ingest failure, 3 invalid configuration,
4 training failure, 5 evaluation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import agent, evaluation
from .config import TrainConfig, from_dict, load_config, save_config
from .errors import (
    CheckpointError,
    ConfigInvalid,
    MalformedRow,
    MissingColumn,
    NoPairsFound,
    ScenarioFormatError,
    SvoDriveError,
)
from .scenario import (
    DESK_SPECS,
    PairingRules,
    SynthSpec,
    extract_scenarios,
    load_scenario_set,
    split_scenarios,
    synth_scenario,
    write_scenario_set,
)
from .tracks import load_tracks

EXIT_INGEST, EXIT_CONFIG, EXIT_TRAIN, EXIT_EVAL = 2, 3, 4, 5
DEFAULT_SEED = 0
# held-out share used for the reference dataset (17 of 232 pairs)
REFERENCE_TEST_FRACTION = 17 / 232

log = logging.getLogger("svodrive")


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _track_files(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.csv")))
        elif p.exists():
            files.append(p)
    return files


def cmd_ingest(args) -> int:
    files = _track_files(args.tracks)
    if not files:
        raise CommandError(EXIT_INGEST, "no tracks found")
    rules = PairingRules()
    if args.any_maneuver:
        everything = frozenset({"left", "right", "straight"})
        rules = PairingRules(ego_maneuvers=everything, other_maneuvers=everything)
    scenarios = []
    for file_id, path in enumerate(files):
        try:
            records = load_tracks(path)
        except (MalformedRow, MissingColumn) as exc:
            raise CommandError(EXIT_INGEST, f"{path}: {exc}") from None
        try:
            scenarios.extend(extract_scenarios(records, rules, file_id=file_id))
        except NoPairsFound:
            log.info("%s: no interacting pairs", path)
    if not scenarios:
        raise CommandError(EXIT_INGEST, "no interacting vehicle pairs found")
    test_count = args.test_count
    if test_count is None:
        test_count = round(len(scenarios) * REFERENCE_TEST_FRACTION)
    try:
        train, test = split_scenarios(scenarios, test_count, args.seed)
    except ValueError as exc:
        raise CommandError(EXIT_INGEST, str(exc)) from None
    write_scenario_set(args.out, train, test)
    print(f"wrote {len(train)} train / {len(test)} test scenarios to {args.out}")
    return 0


def cmd_synth(args) -> int:
    if args.spec:
        try:
            raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
            specs = [SynthSpec.from_dict(d) for d in (raw if isinstance(raw, list) else [raw])]
        except (OSError, ValueError, TypeError) as exc:
            raise CommandError(EXIT_CONFIG, f"invalid synth spec: {exc}") from None
    else:
        specs = list(DESK_SPECS)
    try:
        scenarios = [synth_scenario(s, args.seed) for s in specs]
        train, test = split_scenarios(scenarios, args.test_count, args.seed)
    except (SvoDriveError, ValueError) as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from None
    write_scenario_set(args.out, train, test)
    print(f"wrote {len(train)} train / {len(test)} test scenarios to {args.out}")
    return 0


def _parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigInvalid(f"override {item!r} is not key=value")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_config(args) -> TrainConfig:
    """Defaults, then the config file, then command-line flags."""
    data = TrainConfig().to_dict()
    if args.config:
        data.update(load_config(args.config).to_dict())
    data.update(_parse_overrides(args.set))
    if args.seed is not None:
        data["seed"] = args.seed
    if args.episodes is not None:
        data["episodes"] = args.episodes
    if args.epochs is not None:
        data["bc_epochs"] = args.epochs
    return from_dict(data)


def _load_scenarios(directory, split, code) -> list:
    try:
        return load_scenario_set(directory, split)
    except (OSError, KeyError, ValueError, ScenarioFormatError) as exc:
        raise CommandError(code, f"cannot load scenarios from {directory}: {exc}") from None


def cmd_train(args) -> int:
    try:
        config = build_config(args)
    except ConfigInvalid as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from None
    scenarios = _load_scenarios(args.scenarios, args.split, EXIT_TRAIN)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.json")
    ckpt = out / "checkpoint.ckpt"
    try:
        if args.model == "bc":
            result = agent.train_bc(scenarios, config)
            agent.save_bc(ckpt, result)
            agent.write_log(result.log, out / "train_log.csv", ("epoch", "loss"))
            final = result.log[-1]["loss"] if result.log else float("nan")
            print(f"final BC loss: {final:.6f}")
        else:
            variant = "svo" if args.model == "sacer-svo" else "velocity"
            result = agent.train(config, scenarios, variant=variant,
                                 progress=_progress_logger(config.episodes))
            agent.save_sac(ckpt, result)
            agent.write_log(result.log, out / "train_log.csv", agent.LOG_FIELDS)
            if result.log:
                curve = evaluation.reward_curve(result.log, min(200, len(result.log)))
                print(f"final moving-average step reward: {curve[-1]:.6f}")
            else:
                print("no episodes run; checkpoint holds the initialization")
    except ConfigInvalid as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from None
    except (SvoDriveError, FloatingPointError, OSError) as exc:
        raise CommandError(EXIT_TRAIN, f"training failed: {exc}") from None
    print(f"checkpoint: {ckpt}")
    return 0


def _progress_logger(total: int):
    every = max(1, total // 20)

    def report(row):
        if row["episode"] % every == 0:
            log.info("episode %d/%d  l=%d  avg step reward %.4f  alpha %.4f",
                     row["episode"], total, row["l_episode"], row["avg_step_reward"], row["alpha"])

    return report


def cmd_evaluate(args) -> int:
    try:
        policy, meta = agent.load_policy(args.checkpoint)
    except CheckpointError as exc:
        raise CommandError(EXIT_EVAL, str(exc)) from None
    scenarios = _load_scenarios(args.scenarios, args.split, EXIT_EVAL)
    try:
        report = evaluation.evaluate(
            policy, scenarios, args.seed, model=meta["model"], split=args.split,
            exclude_collisions=meta["config"].get("exclude_collisions_from_length_error", True))
    except SvoDriveError as exc:
        raise CommandError(EXIT_EVAL, str(exc)) from None
    report.save(args.out)
    if args.st_curves:
        curve_dir = Path(args.st_curves)
        curve_dir.mkdir(parents=True, exist_ok=True)
        for ep in report.episodes:
            name = ep.scenario.name
            svg = curve_dir / f"st_{name}.svg" if args.svg else None
            evaluation.export_st_curves(ep, ep.scenario, curve_dir / f"st_{name}.csv", svg)
    row = report.table_row()
    print(json.dumps(row))
    return 0


def cmd_plot(args) -> int:
    try:
        rows = agent.read_log(args.log)
        curve = evaluation.reward_curve(rows, args.window, args.column)
    except (OSError, KeyError, SvoDriveError) as exc:
        raise CommandError(EXIT_EVAL, f"cannot build reward curve: {exc}") from None
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(f"episode,{args.column}_ma{args.window}\n")
        for i, v in enumerate(curve):
            fh.write(f"{i},{v!r}\n")
    if args.svg:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(curve)
        ax.set_xlabel("episode")
        ax.set_ylabel("average step reward")
        fig.tight_layout()
        fig.savefig(args.svg, format="svg")
        plt.close(fig)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svodrive", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="extract interaction scenarios from track files")
    p.add_argument("--tracks", nargs="+", required=True, help="track CSV files or directories")
    p.add_argument("--out", required=True)
    p.add_argument("--test-count", type=int, default=None)
    p.add_argument("--any-maneuver", action="store_true",
                   help="pair every maneuver combination, not only left turn vs. oncoming")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="write synthetic crossing scenarios")
    p.add_argument("--out", required=True)
    p.add_argument("--spec", help="JSON file with one synth spec or a list of them")
    p.add_argument("--test-count", type=int, default=0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train SACER-SVO, SACER-V or behavior cloning")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--split", default="train", choices=("train", "test", "all"))
    p.add_argument("--model", default="sacer-svo", choices=("sacer-svo", "sacer-v", "bc"))
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--episodes", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="roll out a checkpoint and write the metrics report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--out", required=True)
    p.add_argument("--st-curves", help="directory for per-scenario s-t curve files")
    p.add_argument("--svg", action="store_true", help="also render s-t curves as SVG")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="moving-average reward curve from a training log")
    p.add_argument("--log", required=True)
    p.add_argument("--window", type=int, default=200)
    p.add_argument("--column", default="avg_step_reward")
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SVODRIVE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

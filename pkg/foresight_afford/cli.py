# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Command-line entry point.

Every command reads the run configuration, writes only under the configured
output directory and leaves a ``manifest_<command>.json`` listing its inputs
and outputs with their SHA-256 hashes.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 verification failure.
"""

import argparse
import base64
import hashlib
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from . import __version__
from .affordance import pick_map, place_map
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .data import (
    DATASET_MAGIC,
    collect,
    dataset_filename,
    export_jsonl,
    load_dataset,
    save_dataset,
)
from .errors import ForesightError, MissingCheckpoint
from .evaluation import AblationVariant, ablate, evaluate, read_episode_log, write_episode_log
from .nn import format_report, run_suite
from .render import heatmap, observation_image, write_ppm
from .sim import decode_state
from .training import (
    StageModels,
    TrainConfig,
    TrainingLog,
    ist_stages,
    load_pair,
    run_stage_schedule,
    save_pair,
    stage_tag,
    train_only_dist,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3

Result = Tuple[int, List[Path], List[Path]]


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults when omitted)")
    common.add_argument("--seed", type=int, help="global seed, overrides FORESIGHT_SEED and the file")
    common.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--out", help="output directory, overrides FORESIGHT_OUT and the file")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for detail")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="foresight-afford",
        description="Learn foresightful dense affordances for deformable object manipulation.",
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("collect", parents=[common], help="collect multi-stage interaction data")
    p.add_argument("--jsonl", action="store_true", help="also export every dataset as JSON lines")

    commands.add_parser("train", parents=[common], help="stage-by-stage training")
    commands.add_parser("ist", parents=[common], help="integrated fine-tuning of the trained stages")

    p = commands.add_parser("eval", parents=[common], help="evaluate one stage's models")
    p.add_argument("--stage", type=int, help="stage to evaluate (default: the last)")
    p.add_argument(
        "--variant", default=AblationVariant.FULL.value, choices=[v.value for v in AblationVariant]
    )
    p.add_argument(
        "--task-param",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a task parameter for evaluation only, e.g. n_particles=40",
    )

    commands.add_parser("ablate", parents=[common], help="score every variant at every stage")

    p = commands.add_parser("render", parents=[common], help="draw observations and affordance maps")
    p.add_argument("--state", help="encoded particle state or dataset file")
    p.add_argument("--record", type=int, default=0, help="record index when --state is a dataset")
    p.add_argument("--checkpoints", help="checkpoint directory for affordance maps")
    p.add_argument("--stage", type=int, help="stage of the checkpoints (default: the last)")
    p.add_argument("--episode-log", help="episode log to draw step by step")

    commands.add_parser("gradcheck", parents=[common], help="finite-difference check of every layer")
    return parser


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, doc: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_manifest(cfg: RunConfig, command: str, inputs: Sequence[Path], outputs: Sequence[Path]) -> Path:
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "config_fingerprint": cfg.fingerprint(),
        "inputs": {str(p): _sha256(p) for p in inputs if p.is_file()},
        "outputs": {str(p): _sha256(p) for p in outputs if p.is_file()},
    }
    return _write_json(cfg.out_dir / "manifest_{}.json".format(command), doc)


def _datasets_dir(cfg: RunConfig) -> Path:
    return cfg.out_dir / "datasets"


def _checkpoints_dir(cfg: RunConfig) -> Path:
    return cfg.out_dir / "checkpoints"


def _train_config(cfg: RunConfig) -> TrainConfig:
    return replace(cfg.train, seed=cfg.seed)


def cmd_collect(cfg: RunConfig, args: argparse.Namespace) -> Result:
    task = cfg.make_task()
    collection = collect(task, cfg.collection, cfg.seed, args.threads)
    outputs = []
    for dataset in collection.datasets:
        path = _datasets_dir(cfg) / dataset_filename(dataset.stage)
        save_dataset(dataset, path)
        outputs.append(path)
        if args.jsonl:
            jsonl = path.with_suffix(".jsonl")
            export_jsonl(dataset, jsonl)
            outputs.append(jsonl)
    outputs.append(_write_json(cfg.out_dir / "collection_report.json", collection.report()))
    for r in collection.reports:
        print(
            "stage {}: {}/{} accepted ({:.1%}), {} records, mean dist {:.4f}".format(
                r.stage, r.accepted, r.attempts, r.acceptance_rate, r.records, r.mean_dist_after
            )
        )
    return EXIT_OK, [], outputs


def cmd_train(cfg: RunConfig, args: argparse.Namespace) -> Result:
    stages = range(1, cfg.collection.num_stages + 1)
    paths = [_datasets_dir(cfg) / dataset_filename(s) for s in stages]
    missing = [s for s, p in zip(stages, paths) if not p.exists()]
    if missing:
        raise MissingCheckpoint(
            "datasets missing for stages {} under {}; run collect first".format(missing, _datasets_dir(cfg))
        )
    datasets = [load_dataset(p) for p in paths]
    train_cfg = _train_config(cfg)
    log = TrainingLog(cfg.out_dir / "train_log.jsonl")
    outputs = [cfg.out_dir / "train_log.jsonl"]
    try:
        models = run_stage_schedule(datasets, train_cfg, log)
        for stage in models.stages:
            names = save_pair(*models.pair(stage), _checkpoints_dir(cfg), stage_tag(stage))
            outputs += [_checkpoints_dir(cfg) / n for n in names]
        reports = [asdict(r) for r in models.reports]
        if train_cfg.only_dist:
            pick, place, only = train_only_dist(datasets, train_cfg, log)
            names = save_pair(pick, place, _checkpoints_dir(cfg), "only_dist")
            outputs += [_checkpoints_dir(cfg) / n for n in names]
            reports += [asdict(r) for r in only]
    finally:
        log.close()
    outputs.append(_write_json(cfg.out_dir / "train_report.json", {"reports": reports}))
    return EXIT_OK, paths, outputs


def _load_stages(cfg: RunConfig) -> Tuple[StageModels, List[Path]]:
    models = StageModels()
    inputs = []
    for stage in range(1, cfg.collection.num_stages + 1):
        try:
            models.picks[stage], models.places[stage] = load_pair(_checkpoints_dir(cfg), stage_tag(stage))
        except MissingCheckpoint:
            logger.warning("no checkpoints for stage %d", stage)
            continue
        inputs += [_checkpoints_dir(cfg) / "{}_{}.ckpt".format(stage_tag(stage), r) for r in ("pick", "place")]
    if not models.stages:
        raise MissingCheckpoint("no stage checkpoints under {}; run train first".format(_checkpoints_dir(cfg)))
    return models, inputs


def cmd_ist(cfg: RunConfig, args: argparse.Namespace) -> Result:
    models, inputs = _load_stages(cfg)
    task = cfg.make_task()
    log = TrainingLog(cfg.out_dir / "ist_log.jsonl")
    try:
        tuned, episodes = ist_stages(models, task, _train_config(cfg), cfg.eval.num_drops, log)
    finally:
        log.close()
    outputs = [cfg.out_dir / "ist_log.jsonl"]
    for stage in tuned.stages:
        names = save_pair(*tuned.pair(stage), _checkpoints_dir(cfg), stage_tag(stage, ist=True))
        outputs += [_checkpoints_dir(cfg) / n for n in names]
    episode_log = cfg.out_dir / "ist_episodes.jsonl"
    with open(episode_log, "w") as f:
        for entry in episodes:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
    outputs.append(episode_log)
    return EXIT_OK, inputs, outputs


def _parse_params(items: Sequence[str]) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError("task parameter {!r} is not KEY=VALUE".format(item))
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def _eval_pair(cfg: RunConfig, stage: int, variant: AblationVariant) -> Tuple[Any, Any, str]:
    directory = _checkpoints_dir(cfg)
    if variant == AblationVariant.ONLY_DIST:
        return (*load_pair(directory, "only_dist"), "only_dist")
    if variant in (AblationVariant.FULL, AblationVariant.RAND_PICK):
        try:
            return (*load_pair(directory, stage_tag(stage, ist=True)), stage_tag(stage, ist=True))
        except MissingCheckpoint:
            logger.warning("no integrated-training checkpoints for stage %d; using the stage checkpoints", stage)
    return (*load_pair(directory, stage_tag(stage)), stage_tag(stage))


def cmd_eval(cfg: RunConfig, args: argparse.Namespace) -> Result:
    stage = args.stage if args.stage is not None else cfg.collection.num_stages
    variant = AblationVariant(args.variant)
    task = cfg.make_task(**_parse_params(args.task_param))
    pick, place, tag = _eval_pair(cfg, stage, variant)
    summary = evaluate(pick, place, task, cfg.eval, variant.value, args.threads)
    report = dict(summary.to_dict(), stage=stage, checkpoints=tag, task=task.describe())
    outputs = [
        _write_json(cfg.out_dir / "eval_report.json", report),
        cfg.out_dir / "eval_report.txt",
        cfg.out_dir / "eval_episodes.jsonl",
    ]
    text = "{} {} on {}: mean score {:.4f} +/- {:.4f} over {} seeds".format(
        variant.value, tag, task.NAME, summary.mean, summary.stderr, len(summary.episodes)
    )
    rate = summary.success_rate()
    if rate is not None:
        text += ", success rate {:.1%}".format(rate)
    outputs[1].write_text(text + "\n")
    write_episode_log([summary], outputs[2])
    print(text)
    inputs = [_checkpoints_dir(cfg) / "{}_{}.ckpt".format(tag, r) for r in ("pick", "place")]
    return EXIT_OK, inputs, outputs


def cmd_ablate(cfg: RunConfig, args: argparse.Namespace) -> Result:
    task = cfg.make_task()
    stages = list(range(1, cfg.collection.num_stages + 1))
    report = ablate(_checkpoints_dir(cfg), task, cfg.eval, stages, args.threads)
    table = report.table()
    outputs = [_write_json(cfg.out_dir / "ablation.json", report.to_dict()), cfg.out_dir / "ablation.txt"]
    outputs[1].write_text(table + "\n")
    print(table)
    inputs = sorted(_checkpoints_dir(cfg).glob("*.ckpt")) if _checkpoints_dir(cfg).exists() else []
    return EXIT_OK, inputs, outputs


def cmd_render(cfg: RunConfig, args: argparse.Namespace) -> Result:
    if not args.state and not args.episode_log:
        raise ConfigError("render needs --state or --episode-log")
    task = cfg.make_task()
    out = cfg.out_dir / "render"
    outputs: List[Path] = []
    inputs: List[Path] = []

    if args.episode_log:
        inputs.append(Path(args.episode_log))
        for entry in read_episode_log(args.episode_log):
            if "state" not in entry:
                continue
            system = decode_state(base64.b64decode(entry["state"]))
            step = "initial" if entry["step"] < 0 else "step{:02d}".format(entry["step"])
            path = out / "episode_{}_{}_{}.ppm".format(entry.get("variant", "Full"), entry["seed"], step)
            write_ppm(path, observation_image(task.observe(system)))
            outputs.append(path)

    if args.state:
        source = Path(args.state)
        inputs.append(source)
        blob = source.read_bytes()
        if blob[:len(DATASET_MAGIC)] == DATASET_MAGIC:
            dataset = load_dataset(source)
            if not 0 <= args.record < len(dataset):
                raise ConfigError("record {} out of range (dataset holds {})".format(args.record, len(dataset)))
            obs = dataset.records[args.record].obs_before
        else:
            obs = task.observe(decode_state(blob))
        write_ppm(out / "observation.ppm", observation_image(obs))
        outputs.append(out / "observation.ppm")
        if args.checkpoints:
            stage = args.stage if args.stage is not None else cfg.collection.num_stages
            pick_net, place_net = load_pair(args.checkpoints, stage_tag(stage))
            picking = pick_map(pick_net, obs)
            best = picking.argmax()
            write_ppm(out / "pick_map.ppm", heatmap(picking))
            write_ppm(out / "place_map.ppm", heatmap(place_map(place_net, obs, best), mark=best))
            outputs += [out / "pick_map.ppm", out / "place_map.ppm"]
    for path in outputs:
        print(path)
    return EXIT_OK, inputs, outputs


def cmd_gradcheck(cfg: RunConfig, args: argparse.Namespace) -> Result:
    results = run_suite(cfg.seed)
    report = format_report(results)
    print(report)
    path = cfg.out_dir / "gradcheck.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report + "\n")
    failed = [r.layer for r in results if not r.passed]
    if failed:
        print("gradient check failed for: {}".format(", ".join(failed)), file=sys.stderr)
        return EXIT_VERIFY, [], [path]
    return EXIT_OK, [], [path]


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], Result]] = {
    "collect": cmd_collect,
    "train": cmd_train,
    "ist": cmd_ist,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "render": cmd_render,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit:
        return EXIT_OK if exit.code in (0, None) else EXIT_USAGE

    levels = [logging.WARNING, logging.INFO, logging.DEBUG]
    logging.basicConfig(
        level=levels[min(args.verbose, 2)], format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = apply_overrides(load_config(args.config), seed=args.seed, out=args.out)
        cfg.validate()
    except (ConfigError, OSError) as err:
        print("configuration error: {}".format(err), file=sys.stderr)
        return EXIT_USAGE

    try:
        code, inputs, outputs = COMMANDS[args.command](cfg, args)
        write_manifest(cfg, args.command, inputs, outputs)
    except ConfigError as err:
        print("usage error: {}".format(err), file=sys.stderr)
        return EXIT_USAGE
    except (ForesightError, ValueError, OSError) as err:
        logger.debug("command %s failed", args.command, exc_info=True)
        print("{} failed: {}".format(args.command, err), file=sys.stderr)
        return EXIT_RUNTIME
    return code


def run() -> None:
    sys.exit(main())

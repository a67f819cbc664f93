# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Stage-by-stage training of the place and pick networks, and integrated fine-tuning.

Stage 1 place labels are ``1 - dist`` of the state reached. Later stages blend
that with the value of the reached state under the previous stage's pick
network. Pick labels are always the best place score of the current stage's
place network for the picked cell.
"""

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, IO, List, Optional, Sequence, Tuple, Union

import numpy as np

from .affordance import (
    aggregate_pick_target,
    clamp_unit,
    estimate_value,
    place_map_from_features,
    plan_action,
    to_world,
)
from .data import InteractionRecord, StageDataset
from .errors import CheckpointFormatError, EmptyObject, ForesightError, MissingCheckpoint, TrainingDiverged
from .nn import AdamState, PickNet, PlaceNet, adam_step, load_checkpoint, mae_grad, mae_loss, save_checkpoint
from .nn.model import AffordanceNet
from .perception import Observation
from .sim import execute_pick_place
from .tasks import Task
from .workers import job_rng
from .workspace import GridCoord

logger = logging.getLogger(__name__)

_ROLE_IDS = {"pick": 0, "place": 1}


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.5
    beta: float = 0.5
    lr: float = 1e-4
    ist_lr: float = 5e-5
    batch_size: int = 20
    epochs: int = 20
    ist_episodes: int = 50
    ist_max_actions: int = 10
    exploration_eps: float = 0.1
    seed: int = 0
    width: float = 0.25
    shuffle: bool = True
    ist_terminal_dist: float = 0.1
    warm_start: bool = True
    only_dist: bool = True
    ist_all_stages: bool = True

    def validate(self) -> None:
        if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1) or abs(self.alpha + self.beta - 1) > 1e-9:
            raise ValueError("alpha and beta must lie in [0, 1] and sum to 1")
        if not (self.lr > 0 and self.ist_lr > 0):
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0 or self.ist_episodes < 0 or self.ist_max_actions < 0:
            raise ValueError("epochs and IST budgets must be non-negative")
        if not 0 <= self.exploration_eps <= 1:
            raise ValueError("exploration_eps must lie in [0, 1]")
        if not 0 < self.width <= 1:
            raise ValueError("width must lie in (0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


class TrainingLog:
    """JSON-lines log of optimisation steps; a no-op without a path."""

    def __init__(self, path: Optional[Union[str, Path]] = None) -> None:
        self.path = Path(path) if path is not None else None
        self.step = 0
        self._start = time.time()
        self._file: Optional[IO[str]] = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._file = open(self.path, "a")

    def write(self, loss: float, stage: int, role: str, **extra: Any) -> None:
        self.step += 1
        if self._file is None:
            return
        entry = dict(extra, step=self.step, loss=loss, stage=stage, role=role, wall_time=time.time() - self._start)
        self._file.write(json.dumps(entry, sort_keys=True) + "\n")

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None


@dataclass
class TrainReport:
    stage: int
    role: str
    records: int
    epochs: int
    final_mae: float
    checksum: str


@dataclass
class StageModels:
    """Per-stage pick and place networks, keyed by stage index."""

    picks: Dict[int, PickNet] = field(default_factory=dict)
    places: Dict[int, PlaceNet] = field(default_factory=dict)
    reports: List[TrainReport] = field(default_factory=list)

    @property
    def stages(self) -> List[int]:
        return sorted(self.picks)

    @property
    def final_stage(self) -> int:
        if not self.picks:
            raise MissingCheckpoint("no trained stage")
        return max(self.picks)

    def pair(self, stage: Optional[int] = None) -> Tuple[PickNet, PlaceNet]:
        stage = self.final_stage if stage is None else stage
        if stage not in self.picks or stage not in self.places:
            raise MissingCheckpoint("no models for stage {}".format(stage))
        return self.picks[stage], self.places[stage]


def checkpoint_name(tag: str, role: str) -> str:
    return "{}_{}.ckpt".format(tag, role)


def stage_tag(stage: int, ist: bool = False) -> str:
    return "{}stage{}".format("ist_" if ist else "", stage)


def _net_seed(seed: int, role: str) -> int:
    return int(np.random.SeedSequence([seed, _ROLE_IDS[role]]).generate_state(1)[0])


def fresh_pick(cfg: TrainConfig) -> PickNet:
    return PickNet(width=cfg.width, seed=_net_seed(cfg.seed, "pick"))


def fresh_place(cfg: TrainConfig) -> PlaceNet:
    return PlaceNet(width=cfg.width, seed=_net_seed(cfg.seed, "place"))


def distance_label(record: InteractionRecord) -> float:
    return 1.0 - record.dist_after


def label_place_stage1(record: InteractionRecord) -> float:
    """Place label of a last-step transition: how close it got to the target."""
    if record.stage != 1:
        raise ValueError("stage-1 labels need a stage-1 record, got stage {}".format(record.stage))
    return distance_label(record)


def _value(pick_net: PickNet, obs: Observation) -> float:
    try:
        return estimate_value(pick_net, obs).value
    except EmptyObject:
        return 0.0


def label_place_stage_i(
    record: InteractionRecord, prev_pick: Optional[PickNet], alpha: float = 0.5, beta: float = 0.5
) -> float:
    """``alpha * value(o') + beta * (1 - dist(o'))`` with the previous stage's pick network."""
    if record.stage < 2:
        raise ValueError("stage-i labels need a record from stage 2 or later, got stage {}".format(record.stage))
    if prev_pick is None:
        raise MissingCheckpoint("stage {} labels need the stage {} pick network".format(record.stage, record.stage - 1))
    if prev_pick.stage >= record.stage:
        raise ValueError(
            "stage {} labels must not read a pick network from stage {}".format(record.stage, prev_pick.stage)
        )
    return alpha * _value(prev_pick, record.obs_after) + beta * distance_label(record)


def _stack(observations: Sequence[Observation]) -> np.ndarray:
    return np.stack([o.to_tensor() for o in observations])


def _obs_key(obs: Observation) -> bytes:
    digest = hashlib.sha256(np.ascontiguousarray(obs.occupancy).tobytes())
    digest.update(np.ascontiguousarray(obs.height_map).tobytes())
    return digest.digest()


def _batch_loss(
    net: AffordanceNet,
    records: Sequence[InteractionRecord],
    targets: np.ndarray,
    update: bool,
    state: Optional[AdamState],
) -> float:
    x = _stack([r.obs_before for r in records])
    picks = np.array([r.pick for r in records])
    if isinstance(net, PlaceNet):
        pred = net.scores_at(x, picks, np.array([r.place for r in records]))
    else:
        assert isinstance(net, PickNet)
        pred = net.scores_at(x, picks)
    loss = mae_loss(pred, targets)
    if not math.isfinite(loss):
        raise TrainingDiverged("non-finite {} loss".format(net.ROLE))
    if update:
        assert state is not None
        net.zero_grad()
        net.backward(mae_grad(pred, targets))
        adam_step(net.parameters(), net.gradients(), state)
    return loss


def fit(
    net: AffordanceNet,
    records: Sequence[InteractionRecord],
    targets: np.ndarray,
    cfg: TrainConfig,
    stage: int,
    log: Optional[TrainingLog] = None,
    lr: Optional[float] = None,
) -> float:
    """Regress the net's score at each record's cells onto ``targets`` and return the final training MAE."""
    targets = np.asarray(targets, dtype=np.float64)
    if len(records) == 0:
        raise ValueError("cannot train on an empty dataset")
    if np.any(targets < 0) or np.any(targets > 1):
        raise ValueError("training targets must lie in [0, 1]")
    state = AdamState(lr=cfg.lr if lr is None else lr)
    rng = job_rng(cfg.seed, 10, stage, _ROLE_IDS[net.ROLE])
    log = log if log is not None else TrainingLog()
    n = len(records)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = _batch_loss(net, [records[i] for i in idx], targets[idx], True, state)
            losses.append(loss)
            log.write(loss, stage, net.ROLE, epoch=epoch)
        if not net.all_finite():
            raise TrainingDiverged("non-finite {} weights after epoch {} of stage {}".format(net.ROLE, epoch, stage))
        logger.info("stage %d %s epoch %d: mean batch MAE %.4f", stage, net.ROLE, epoch, float(np.mean(losses)))

    total = 0.0
    for start in range(0, n, cfg.batch_size):
        chunk = list(range(start, min(n, start + cfg.batch_size)))
        total += _batch_loss(net, [records[i] for i in chunk], targets[chunk], False, None) * len(chunk)
    return total / n


def place_labels(
    dataset: StageDataset, prev_pick: Optional[PickNet], cfg: TrainConfig, only_dist: bool = False
) -> np.ndarray:
    if only_dist or dataset.stage == 1:
        return np.array([distance_label(r) for r in dataset.records])
    values: Dict[bytes, float] = {}
    labels = []
    for r in dataset.records:
        key = _obs_key(r.obs_after)
        if key not in values:
            values[key] = label_place_stage_i(r, prev_pick, 1.0, 0.0)
        labels.append(cfg.alpha * values[key] + cfg.beta * distance_label(r))
    return np.array(labels)


def pick_targets(records: Sequence[InteractionRecord], place_net: PlaceNet) -> np.ndarray:
    """Best place score for each record's (observation, pick), clamped to [0, 1].

    The backbone runs once per distinct observation and the place map once per
    distinct (observation, pick).
    """
    features: Dict[bytes, Tuple[np.ndarray, np.ndarray]] = {}
    cache: Dict[Tuple[bytes, GridCoord], float] = {}
    out = []
    for r in records:
        key = _obs_key(r.obs_before)
        if (key, r.pick) not in cache:
            if key not in features:
                f, g = place_net.features(r.obs_before.to_tensor()[None])
                features[key] = (f[0], g[0])
            f0, g0 = features[key]
            cache[(key, r.pick)] = clamp_unit(aggregate_pick_target(place_map_from_features(place_net, f0, g0, r.pick)))
        out.append(cache[(key, r.pick)])
    return np.array(out)


def _tag(net: AffordanceNet, stage: int, tag: str, sources: List[str]) -> None:
    net.stage = stage
    net.lineage = {"role": net.ROLE, "tag": tag, "sources": sources}


def train_place_stage(
    dataset: StageDataset,
    prev_pick: Optional[PickNet],
    cfg: TrainConfig,
    init: Optional[PlaceNet] = None,
    log: Optional[TrainingLog] = None,
) -> Tuple[PlaceNet, TrainReport]:
    """Fit the stage's place network onto its labels at each record's (pick, place)."""
    if dataset.stage > 1 and prev_pick is None:
        raise MissingCheckpoint(
            "stage {} place training needs the stage {} pick network".format(dataset.stage, dataset.stage - 1)
        )
    if prev_pick is not None and prev_pick.stage != dataset.stage - 1:
        raise ValueError(
            "stage {} place training must use the stage {} pick network, got stage {}".format(
                dataset.stage, dataset.stage - 1, prev_pick.stage
            )
        )
    labels = place_labels(dataset, prev_pick, cfg)
    net = init.clone() if init is not None else fresh_place(cfg)
    assert isinstance(net, PlaceNet)
    mae = fit(net, dataset.records, labels, cfg, dataset.stage, log)
    _tag(net, dataset.stage, stage_tag(dataset.stage), [prev_pick.checksum()] if prev_pick is not None else [])
    report = TrainReport(dataset.stage, "place", len(dataset), cfg.epochs, mae, net.checksum())
    logger.info("stage %d place network %s: training MAE %.4f", dataset.stage, report.checksum, mae)
    return net, report


def train_pick_stage(
    dataset: StageDataset,
    place_net: PlaceNet,
    cfg: TrainConfig,
    init: Optional[PickNet] = None,
    log: Optional[TrainingLog] = None,
) -> Tuple[PickNet, TrainReport]:
    """Fit the stage's pick network onto the best place scores of ``place_net``."""
    if len(dataset) == 0:
        raise ValueError("cannot train a pick network on an empty dataset")
    targets = pick_targets(dataset.records, place_net)
    net = init.clone() if init is not None else fresh_pick(cfg)
    assert isinstance(net, PickNet)
    mae = fit(net, dataset.records, targets, cfg, dataset.stage, log)
    _tag(net, dataset.stage, stage_tag(dataset.stage), [place_net.checksum()])
    report = TrainReport(dataset.stage, "pick", len(dataset), cfg.epochs, mae, net.checksum())
    logger.info("stage %d pick network %s: training MAE %.4f", dataset.stage, report.checksum, mae)
    return net, report


def check_stages(datasets: Sequence[StageDataset]) -> List[StageDataset]:
    """Datasets ordered by stage; they must cover stages 1..S without gaps."""
    ordered = sorted(datasets, key=lambda d: d.stage)
    if not ordered:
        raise MissingCheckpoint("no stage datasets")
    present = [d.stage for d in ordered]
    expected = list(range(1, len(ordered) + 1))
    if present != expected:
        missing = sorted(set(range(1, max(present + [0]) + 1)) - set(present))
        raise MissingCheckpoint("stage datasets missing for stages {}".format(missing or expected))
    return ordered


def run_stage_schedule(
    datasets: Sequence[StageDataset], cfg: TrainConfig, log: Optional[TrainingLog] = None
) -> StageModels:
    """Train place then pick for stages 1..S, each stage starting from the previous one's weights."""
    cfg.validate()
    models = StageModels()
    prev_pick: Optional[PickNet] = None
    prev_place: Optional[PlaceNet] = None
    for dataset in check_stages(datasets):
        warm = cfg.warm_start and dataset.stage > 1
        place, place_report = train_place_stage(dataset, prev_pick, cfg, prev_place if warm else None, log)
        pick, pick_report = train_pick_stage(dataset, place, cfg, prev_pick if warm else None, log)
        models.places[dataset.stage] = place
        models.picks[dataset.stage] = pick
        models.reports += [place_report, pick_report]
        prev_pick, prev_place = pick, place
    return models


def train_only_dist(
    datasets: Sequence[StageDataset], cfg: TrainConfig, log: Optional[TrainingLog] = None
) -> Tuple[PickNet, PlaceNet, List[TrainReport]]:
    """Greedy variant trained once on the pooled stages with distance labels only."""
    cfg.validate()
    records = [r for d in check_stages(datasets) for r in d.records]
    if not records:
        raise ValueError("cannot train on an empty dataset")
    place = fresh_place(cfg)
    place_mae = fit(place, records, np.array([distance_label(r) for r in records]), cfg, 0, log)
    _tag(place, 0, "only_dist", [])
    pick = fresh_pick(cfg)
    pick_mae = fit(pick, records, pick_targets(records, place), cfg, 0, log)
    _tag(pick, 0, "only_dist", [place.checksum()])
    reports = [
        TrainReport(0, "place", len(records), cfg.epochs, place_mae, place.checksum()),
        TrainReport(0, "pick", len(records), cfg.epochs, pick_mae, pick.checksum()),
    ]
    return pick, place, reports


@dataclass
class IstResult:
    pick: PickNet
    place: PlaceNet
    episodes: List[Dict[str, Any]]


def _single_step(
    net: AffordanceNet,
    obs: Observation,
    pick: GridCoord,
    place: Optional[GridCoord],
    target: float,
    state: AdamState,
) -> float:
    """One Adam step on a single executed transition."""
    x = obs.to_tensor()[None]
    if isinstance(net, PlaceNet):
        assert place is not None
        pred = net.scores_at(x, np.array([pick]), np.array([place]))
    else:
        assert isinstance(net, PickNet)
        pred = net.scores_at(x, np.array([pick]))
    goal = np.array([target])
    loss = mae_loss(pred, goal)
    if not math.isfinite(loss):
        raise TrainingDiverged("non-finite {} loss during integrated training".format(net.ROLE))
    net.zero_grad()
    net.backward(mae_grad(pred, goal))
    adam_step(net.parameters(), net.gradients(), state)
    return loss


def ist(
    pick: PickNet,
    place: PlaceNet,
    task: Task,
    cfg: TrainConfig,
    num_drops: int = 5,
    log: Optional[TrainingLog] = None,
) -> IstResult:
    """Fine-tune both networks on transitions executed by their own policy.

    Each executed transition updates the place network towards its label
    (distance only once the target is within ``ist_terminal_dist``), then the
    pick network towards the updated place network's best score for the
    executed pick.
    """
    cfg.validate()
    stage = pick.stage
    sources = [pick.checksum(), place.checksum()]
    pick = pick.clone()  # type: ignore[assignment]
    place = place.clone()  # type: ignore[assignment]
    pick_state = AdamState(lr=cfg.ist_lr)
    place_state = AdamState(lr=cfg.ist_lr)
    log = log if log is not None else TrainingLog()
    episodes: List[Dict[str, Any]] = []
    for episode in range(cfg.ist_episodes):
        rng = job_rng(cfg.seed, 20, episode)
        system = task.initial_state(int(rng.integers(2 ** 31)), num_drops)
        for t in range(cfg.ist_max_actions):
            obs = task.observe(system)
            try:
                plan = plan_action(pick, place, obs, cfg.exploration_eps, rng)
                after = execute_pick_place(system, to_world(obs, plan.pick, plan.place), task.sim, task.bounds)
            except ForesightError as err:
                # the state is unchanged, so the same plan would fail again
                logger.warning("integrated training episode %d ended at step %d: %s", episode, t, err)
                episodes.append({"episode": episode, "step": t, "skipped": str(err)})
                break
            obs_after = task.observe(after)
            dist = task.distance(after, obs_after)
            if dist < cfg.ist_terminal_dist:
                label = 1.0 - dist
            else:
                label = cfg.alpha * _value(pick, obs_after) + cfg.beta * (1.0 - dist)
            place_loss = _single_step(place, obs, plan.pick, plan.place, label, place_state)
            features, g = place.features(obs.to_tensor()[None])
            placing = place_map_from_features(place, features[0], g[0], plan.pick)
            pick_target = clamp_unit(aggregate_pick_target(placing))
            pick_loss = _single_step(pick, obs, plan.pick, None, pick_target, pick_state)
            log.write(place_loss, stage, "place", ist_episode=episode)
            log.write(pick_loss, stage, "pick", ist_episode=episode)
            episodes.append(
                {
                    "episode": episode,
                    "step": t,
                    "pick": list(plan.pick),
                    "place": list(plan.place),
                    "explored": plan.explored,
                    "dist_after": dist,
                    "place_label": label,
                    "pick_target": pick_target,
                }
            )
            system = after
            if dist < cfg.ist_terminal_dist:
                break
    if not (pick.all_finite() and place.all_finite()):
        raise TrainingDiverged("non-finite weights after integrated training")
    for net in (pick, place):
        _tag(net, stage, stage_tag(stage, ist=True), sources)
    logger.info("integrated training: %d episodes, %d logged steps", cfg.ist_episodes, len(episodes))
    return IstResult(pick, place, episodes)


def ist_stages(
    models: StageModels, task: Task, cfg: TrainConfig, num_drops: int = 5, log: Optional[TrainingLog] = None
) -> Tuple[StageModels, List[Dict[str, Any]]]:
    """Integrated training of every stage, or of the final stage alone without ``ist_all_stages``."""
    stages = models.stages if cfg.ist_all_stages else [models.final_stage]
    tuned = StageModels()
    episodes: List[Dict[str, Any]] = []
    for stage in stages:
        result = ist(*models.pair(stage), task, cfg, num_drops, log)
        tuned.picks[stage] = result.pick
        tuned.places[stage] = result.place
        episodes += [dict(e, stage=stage) for e in result.episodes]
    return tuned, episodes


def save_pair(pick: PickNet, place: PlaceNet, directory: Union[str, Path], tag: str) -> Dict[str, str]:
    """Write a pick/place pair under ``directory`` and return their content ids by file name."""
    directory = Path(directory)
    ids = {}
    for net in (pick, place):
        name = checkpoint_name(tag, net.ROLE)
        ids[name] = save_checkpoint(net, directory / name)
    return ids


def load_pair(directory: Union[str, Path], tag: str) -> Tuple[PickNet, PlaceNet]:
    directory = Path(directory)
    pick = load_checkpoint(directory / checkpoint_name(tag, "pick"))
    place = load_checkpoint(directory / checkpoint_name(tag, "place"))
    if not isinstance(pick, PickNet) or not isinstance(place, PlaceNet):
        raise CheckpointFormatError("checkpoints {} hold networks of the wrong role".format(tag))
    return pick, place

# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Rollout evaluation and ablations.

An episode starts from a lift-and-drop crumpled object, runs the greedy
policy for a fixed number of pick-and-place actions and scores the progress
of the task metric towards its goal.
"""

import base64
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .affordance import plan_action, to_world
from .errors import (
    DegenerateScore,
    EmptyObject,
    EpisodeLogError,
    ForesightError,
    MissingCheckpoint,
    NoGraspableParticle,
)
from .metrics import normalized_score
from .nn import PickNet, PlaceNet
from .sim import ParticleSystem, encode_state, execute_pick_place
from .tasks import CableRing, RopeConfiguration, Task
from .training import load_pair, stage_tag
from .workers import job_rng, parallel_map

logger = logging.getLogger(__name__)


class AblationVariant(Enum):
    FULL = "Full"
    ONLY_DIST = "OnlyDist"
    RAND_PICK = "RandPick"
    NO_IST = "NoIST"


@dataclass(frozen=True)
class EvalConfig:
    n_seeds: int = 20
    base_seed: int = 1000
    max_actions: int = 10
    num_drops: int = 5
    rope_metric_goal: float = -0.04
    success_threshold: float = 0.75
    variants: Tuple[str, ...] = tuple(v.value for v in AblationVariant)

    def validate(self) -> None:
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be at least 1")
        if self.max_actions < 0 or self.num_drops < 0 or self.base_seed < 0:
            raise ValueError("max_actions, num_drops and base_seed must be non-negative")
        if not 0 < self.success_threshold <= 1:
            raise ValueError("success_threshold must lie in (0, 1]")
        for name in self.variants:
            AblationVariant(name)

    def seeds(self) -> List[int]:
        return [self.base_seed + k for k in range(self.n_seeds)]


@dataclass
class StepLog:
    step: int
    pick: Tuple[int, int]
    place: Tuple[int, int]
    dist: float
    value: float
    metric: float
    nograsp: bool = False
    state: bytes = b""


@dataclass
class EpisodeResult:
    seed: int
    metric_initial: float
    metric_final: float
    metric_goal: float
    score: float
    success: Optional[bool]
    steps: List[StepLog] = field(default_factory=list)
    initial_state: bytes = b""

    def recompute_score(self) -> float:
        try:
            return normalized_score(self.metric_initial, self.metric_final, self.metric_goal)
        except DegenerateScore:
            return 0.0

    def to_lines(self, variant: str = AblationVariant.FULL.value) -> List[Dict[str, Any]]:
        """JSON-lines entries: one per step, after a header entry carrying the initial state."""
        head = {
            "seed": self.seed,
            "variant": variant,
            "step": -1,
            "metric_initial": self.metric_initial,
            "metric_final": self.metric_final,
            "metric_goal": self.metric_goal,
            "score": self.score,
            "success": self.success,
            "state": base64.b64encode(self.initial_state).decode("ascii"),
        }
        lines = [head]
        for s in self.steps:
            entry = asdict(s)
            entry.update(seed=self.seed, variant=variant, state=base64.b64encode(s.state).decode("ascii"))
            entry["pick"], entry["place"] = list(s.pick), list(s.place)
            lines.append(entry)
        return lines


def metric_goal(task: Task, cfg: EvalConfig) -> float:
    return cfg.rope_metric_goal if isinstance(task, RopeConfiguration) else task.metric_goal


def episode_success(task: Task, system: ParticleSystem, cfg: EvalConfig) -> Optional[bool]:
    if isinstance(task, CableRing):
        return task.success(system, cfg.success_threshold)
    return task.success(system)


def run_episode(
    pick: PickNet,
    place: PlaceNet,
    task: Task,
    seed: int,
    max_actions: Optional[int] = None,
    cfg: Optional[EvalConfig] = None,
    random_pick: bool = False,
) -> EpisodeResult:
    """Roll the policy out from the crumpled state of ``seed``.

    A pick that grasps nothing still counts as a step and leaves the state unchanged.
    """
    cfg = cfg if cfg is not None else EvalConfig()
    max_actions = cfg.max_actions if max_actions is None else max_actions
    rng = job_rng(seed, 30)
    system = task.initial_state(seed, cfg.num_drops)
    initial_state = encode_state(system)
    metric_initial = task.metric(system)
    goal = metric_goal(task, cfg)

    steps = []
    for t in range(max_actions):
        obs = task.observe(system)
        try:
            plan = plan_action(pick, place, obs, rng=rng, random_pick=random_pick)
        except EmptyObject:
            logger.warning("seed %d step %d: no object in view, episode ends", seed, t)
            break
        nograsp = False
        try:
            system = execute_pick_place(system, to_world(obs, plan.pick, plan.place), task.sim, task.bounds)
        except NoGraspableParticle:
            logger.info("seed %d step %d: nothing grasped at %s", seed, t, tuple(plan.pick))
            nograsp = True
        obs_after = task.observe(system)
        steps.append(
            StepLog(
                t,
                (plan.pick.row, plan.pick.col),
                (plan.place.row, plan.place.col),
                task.distance(system, obs_after),
                plan.value,
                task.metric(system, obs_after),
                nograsp,
                encode_state(system),
            )
        )

    result = EpisodeResult(
        seed, metric_initial, task.metric(system), goal, 0.0, episode_success(task, system, cfg), steps, initial_state
    )
    result.score = result.recompute_score()
    return result


@dataclass
class EvalSummary:
    variant: str
    mean: float
    stderr: float
    episodes: List[EpisodeResult]

    @property
    def scores(self) -> List[float]:
        return [e.score for e in self.episodes]

    def success_rate(self) -> Optional[float]:
        flags = [e.success for e in self.episodes if e.success is not None]
        return sum(flags) / len(flags) if flags else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "variant": self.variant,
            "n": len(self.episodes),
            "mean": self.mean,
            "stderr": self.stderr,
            "success_rate": self.success_rate(),
            "scores": {str(e.seed): e.score for e in self.episodes},
        }


def summarize(variant: str, episodes: Sequence[EpisodeResult]) -> EvalSummary:
    scores = np.array([e.score for e in episodes])
    stderr = float(scores.std(ddof=1) / math.sqrt(len(scores))) if len(scores) > 1 else 0.0
    return EvalSummary(variant, float(scores.mean()), stderr, list(episodes))


def _episode_job(args: Tuple[PickNet, PlaceNet, Task, int, EvalConfig, bool]) -> EpisodeResult:
    pick, place, task, seed, cfg, random_pick = args
    return run_episode(pick, place, task, seed, cfg=cfg, random_pick=random_pick)


def evaluate(
    pick: PickNet,
    place: PlaceNet,
    task: Task,
    cfg: EvalConfig,
    variant: str = AblationVariant.FULL.value,
    threads: int = 1,
) -> EvalSummary:
    """Mean normalized score over ``cfg.n_seeds`` episodes with seeds ``base_seed + k``."""
    cfg.validate()
    random_pick = AblationVariant(variant) == AblationVariant.RAND_PICK
    before = (pick.checksum(), place.checksum())
    jobs = [(pick, place, task, seed, cfg, random_pick) for seed in cfg.seeds()]
    summary = summarize(variant, parallel_map(_episode_job, jobs, threads))
    if (pick.checksum(), place.checksum()) != before:
        raise ForesightError("evaluation modified the model weights")
    logger.info("%s: mean score %.4f +/- %.4f over %d seeds", variant, summary.mean, summary.stderr, cfg.n_seeds)
    return summary


def write_episode_log(summaries: Sequence[EvalSummary], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for summary in summaries:
            for episode in summary.episodes:
                for line in episode.to_lines(summary.variant):
                    f.write(json.dumps(line, sort_keys=True) + "\n")


def read_episode_log(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Entries of an episode log. Frames carrying a state must name their seed and step."""
    entries = []
    with open(path) as f:
        for number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as err:
                raise EpisodeLogError("{} line {}: {}".format(path, number, err)) from err
            if not isinstance(entry, dict):
                raise EpisodeLogError("{} line {}: expected an object".format(path, number))
            if "state" in entry and not (
                isinstance(entry["state"], str) and all(isinstance(entry.get(k), int) for k in ("seed", "step"))
            ):
                raise EpisodeLogError("{} line {}: frame without a state string, seed and step".format(path, number))
            entries.append(entry)
    return entries


@dataclass
class AblationReport:
    stages: List[str]
    variants: List[str]
    matrix: Dict[str, Dict[str, Optional[float]]]
    stderr: Dict[str, Dict[str, Optional[float]]]
    gaps: List[str]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def table(self) -> str:
        width = max([len(v) for v in self.variants] + [8])
        lines = [" ".join(["{:<{}}".format("variant", width)] + ["{:>8}".format(s) for s in self.stages])]
        for v in self.variants:
            cells = []
            for s in self.stages:
                value = self.matrix[v][s]
                cells.append("{:>8}".format("-" if value is None else "{:.3f}".format(value)))
            lines.append(" ".join(["{:<{}}".format(v, width)] + cells))
        return "\n".join(lines)


def _variant_pair(directory: Path, variant: AblationVariant, stage: int) -> Tuple[PickNet, PlaceNet]:
    if variant == AblationVariant.ONLY_DIST:
        return load_pair(directory, "only_dist")
    if variant == AblationVariant.NO_IST:
        return load_pair(directory, stage_tag(stage))
    return load_pair(directory, stage_tag(stage, ist=True))


def ablate(
    checkpoints: Union[str, Path],
    task: Task,
    cfg: EvalConfig,
    stages: Sequence[int],
    threads: int = 1,
) -> AblationReport:
    """Score every variant with every stage's checkpoints.

    Full and RandPick use the integrated-training checkpoints of the stage,
    NoIST the plain stage checkpoints, and OnlyDist its single pooled pair,
    so its row repeats one value. Missing checkpoints leave gaps.
    """
    directory = Path(checkpoints)
    labels = [stage_tag(s) for s in stages]
    variants = [AblationVariant(v) for v in cfg.variants]
    matrix: Dict[str, Dict[str, Optional[float]]] = {v.value: {} for v in variants}
    errors: Dict[str, Dict[str, Optional[float]]] = {v.value: {} for v in variants}
    gaps: List[str] = []
    only_dist: Optional[EvalSummary] = None
    for variant in variants:
        for stage, label in zip(stages, labels):
            summary: Optional[EvalSummary] = None
            try:
                if variant == AblationVariant.ONLY_DIST and only_dist is not None:
                    summary = only_dist
                else:
                    pick, place = _variant_pair(directory, variant, stage)
                    summary = evaluate(pick, place, task, cfg, variant.value, threads)
            except MissingCheckpoint as err:
                logger.warning("ablation gap %s/%s: %s", variant.value, label, err)
                gaps.append("{}/{}".format(variant.value, label))
            if variant == AblationVariant.ONLY_DIST:
                only_dist = summary
            matrix[variant.value][label] = summary.mean if summary is not None else None
            errors[variant.value][label] = summary.stderr if summary is not None else None
    return AblationReport(labels, [v.value for v in variants], matrix, errors, gaps)

# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Multi-stage interaction data collected by reversing actions.

Stage 1 starts one action away from states close to the target. A state is
adopted as a stage ``i + 1`` start only when the reverse of the action that
produced it brings the object back to an observation similar to the stage
``i`` state it came from.
"""

import base64
import hashlib
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .affordance import to_world
from .errors import (
    ChecksumError,
    DatasetFormatError,
    EmptyObject,
    ExpansionStarvation,
    NoGraspableParticle,
    VersionMismatch,
)
from .perception import Observation, state_similarity
from .sim import ParticleSystem, WorldAction, decode_state, encode_state, execute_pick_place, settle
from .tasks import Task
from .workers import job_rng, parallel_map
from .workspace import Bounds, GridCoord

logger = logging.getLogger(__name__)

# job kinds, part of every job's seed path
_NEAR_TARGET, _EXPANSION, _SAMPLING = 0, 1, 2


class Outcome(IntEnum):
    NORMAL = 0
    NOGRASP = 1


@dataclass(frozen=True)
class CollectionConfig:
    """Data collection parameters.

    Lengths left as ``None`` are derived from the particle spacing by
    ``resolve``: the perturbation radius is four spacings, the near-target
    jitter a twentieth of one and the reverse-action noise half the
    perturbation radius.
    """

    records_per_stage: int = 2000
    similarity_threshold: float = 0.85
    actions_per_state: int = 10
    perturb_radius: Optional[float] = None
    random_failure_fraction: float = 0.3
    num_stages: int = 5
    starts_per_stage: int = 40
    max_expansion_attempts: int = 400
    acceptance_floor: float = 0.05
    nograsp_retries: int = 5
    near_target_jitter: Optional[float] = None
    reverse_noise: Optional[float] = None

    def resolve(self, spacing: float) -> "CollectionConfig":
        radius = 4.0 * spacing if self.perturb_radius is None else self.perturb_radius
        return replace(
            self,
            perturb_radius=radius,
            near_target_jitter=0.05 * spacing if self.near_target_jitter is None else self.near_target_jitter,
            reverse_noise=radius / 2.0 if self.reverse_noise is None else self.reverse_noise,
        )

    def validate(self) -> None:
        if not 0 < self.similarity_threshold < 1:
            raise ValueError("similarity_threshold must lie in (0, 1)")
        for name in ("random_failure_fraction", "acceptance_floor"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError("{} must lie in [0, 1]".format(name))
        if self.num_stages < 1:
            raise ValueError("num_stages must be at least 1")
        if self.records_per_stage < 0 or self.nograsp_retries < 0:
            raise ValueError("records_per_stage and nograsp_retries must be non-negative")
        for name in ("actions_per_state", "starts_per_stage", "max_expansion_attempts"):
            if getattr(self, name) < 1:
                raise ValueError("{} must be at least 1".format(name))
        for name in ("perturb_radius", "near_target_jitter", "reverse_noise"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError("{} must be non-negative".format(name))


@dataclass
class InteractionRecord:
    obs_before: Observation
    state_before: bytes
    pick: GridCoord
    place: GridCoord
    obs_after: Observation
    state_after: bytes
    dist_after: float
    stage: int
    outcome: Outcome = Outcome.NORMAL


@dataclass
class StageDataset:
    stage: int
    records: List[InteractionRecord]
    fingerprint: str
    seed: int
    bounds: Bounds
    grid: Tuple[int, int]

    def __post_init__(self) -> None:
        if any(r.stage != self.stage for r in self.records):
            raise ValueError("every record of a stage {} dataset must carry stage {}".format(self.stage, self.stage))

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class Expansion:
    """An accepted harder start state and the action that produced it."""

    state: ParticleSystem
    similarity: float
    action: WorldAction


@dataclass
class StageReport:
    stage: int
    attempts: int
    accepted: int
    acceptance_rate: float
    mean_similarity: float
    records: int
    nograsp: int
    mean_dist_after: float
    dist_histogram: List[int] = field(default_factory=list)


@dataclass
class Collection:
    datasets: List[StageDataset]
    reports: List[StageReport]

    def report(self) -> Dict[str, Any]:
        return {"stages": [asdict(r) for r in self.reports]}


def fingerprint(task: Task, cfg: CollectionConfig, seed: int) -> str:
    """SHA-256 over the canonical JSON of everything that determines a collection."""
    doc = {"task": task.describe(), "sim": asdict(task.sim), "collection": asdict(cfg), "seed": seed}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


def gen_near_target_state(task: Task, rng_seed: int, jitter: Optional[float] = None) -> ParticleSystem:
    """The task's target configuration with a little planar jitter, settled."""
    system = task.target_state()
    jitter = 0.05 * task.spacing if jitter is None else jitter
    if jitter > 0:
        rng = np.random.default_rng(rng_seed)
        system.positions[:, :2] += rng.normal(0.0, jitter, size=(system.n_particles, 2))
    return settle(system, task.sim).system


def fold_to_unfold_expand(
    task: Task, state: ParticleSystem, cfg: CollectionConfig, rng: np.random.Generator
) -> Optional[Expansion]:
    """Perturb ``state`` by one short random action and keep it if the reverse action undoes it.

    Returns ``None`` on rejection, including when either action grasps nothing.
    """
    obs = task.observe(state)
    cells = obs.occupied_cells()
    if not cells:
        return None
    radius = cfg.perturb_radius if cfg.perturb_radius is not None else 4.0 * task.spacing
    px, py = obs.cell_center(cells[int(rng.integers(len(cells)))])
    angle = float(rng.uniform(0.0, 2.0 * math.pi))
    distance = float(rng.uniform(0.0, radius))
    qx, qy = task.bounds.clamp(px + distance * math.cos(angle), py + distance * math.sin(angle))
    action = WorldAction((px, py), (qx, qy))
    try:
        forward = execute_pick_place(state, action, task.sim, task.bounds)
        restored = execute_pick_place(forward, action.reversed(), task.sim, task.bounds)
    except NoGraspableParticle:
        return None
    similarity = state_similarity(task.observe(restored), obs)
    if similarity < cfg.similarity_threshold:
        return None
    return Expansion(forward, similarity, action)


def _uniform_action(obs: Observation, occupied: np.ndarray, rng: np.random.Generator) -> Tuple[GridCoord, GridCoord]:
    pick = occupied[int(rng.integers(len(occupied)))]
    place = int(rng.integers(obs.m * obs.n))
    return GridCoord(int(pick[0]), int(pick[1])), GridCoord(*divmod(place, obs.n))


def _biased_action(
    obs: Observation, occupied: np.ndarray, reverse: WorldAction, noise: float, rng: np.random.Generator
) -> Tuple[GridCoord, GridCoord]:
    """A noisy copy of ``reverse``: an occupied cell near its pick, a cell near its place."""
    ch, cw = obs.bounds.cell_size(obs.m, obs.n)
    centers = np.stack(
        [obs.bounds.xmin + (occupied[:, 1] + 0.5) * cw, obs.bounds.ymin + (occupied[:, 0] + 0.5) * ch], axis=1
    )
    d = np.hypot(centers[:, 0] - reverse.pick_point[0], centers[:, 1] - reverse.pick_point[1])
    near = np.flatnonzero(d <= noise)
    index = int(near[int(rng.integers(len(near)))]) if len(near) else int(np.argmin(d))
    pick = GridCoord(int(occupied[index, 0]), int(occupied[index, 1]))

    angle = float(rng.uniform(0.0, 2.0 * math.pi))
    distance = float(rng.uniform(0.0, noise))
    x, y = obs.bounds.clamp(
        reverse.place_point[0] + distance * math.cos(angle), reverse.place_point[1] + distance * math.sin(angle)
    )
    return pick, obs.cell_of(x, y)


def sample_interactions(
    task: Task,
    start: ParticleSystem,
    count: int,
    cfg: CollectionConfig,
    rng: np.random.Generator,
    stage: int = 1,
    reverse: Optional[WorldAction] = None,
) -> List[InteractionRecord]:
    """Execute ``count`` pick-place actions from ``start`` and label their outcomes.

    When ``reverse`` is given, a ``1 - random_failure_fraction`` share of the
    actions are noisy copies of it and the rest are uniform; otherwise every
    action is uniform. Actions that grasp nothing are redrawn uniformly up to
    ``nograsp_retries`` times and then recorded with ``Outcome.NOGRASP``.
    """
    if count == 0:
        return []
    obs = task.observe(start)
    occupied = np.argwhere(obs.occupancy)
    if len(occupied) == 0:
        raise EmptyObject("start state has no occupied cell")
    blob = encode_state(start)
    noise = cfg.reverse_noise if cfg.reverse_noise is not None else 2.0 * task.spacing
    start_dist = task.distance(start, obs)

    records = []
    for _ in range(count):
        biased = reverse is not None and rng.random() >= cfg.random_failure_fraction
        for attempt in range(cfg.nograsp_retries + 1):
            if biased and attempt == 0:
                assert reverse is not None
                pick, place = _biased_action(obs, occupied, reverse, noise, rng)
            else:
                pick, place = _uniform_action(obs, occupied, rng)
            try:
                after = execute_pick_place(start, to_world(obs, pick, place), task.sim, task.bounds)
            except NoGraspableParticle:
                logger.debug("no grasp at %s, attempt %d", tuple(pick), attempt)
                continue
            obs_after = task.observe(after)
            records.append(
                InteractionRecord(
                    obs, blob, pick, place, obs_after, encode_state(after), task.distance(after, obs_after), stage
                )
            )
            break
        else:
            records.append(InteractionRecord(obs, blob, pick, place, obs, blob, start_dist, stage, Outcome.NOGRASP))
    return records


def replay_record(task: Task, record: InteractionRecord) -> ParticleSystem:
    """Re-simulate a record's action from its stored start state."""
    start = decode_state(record.state_before)
    if record.outcome == Outcome.NOGRASP:
        return start
    return execute_pick_place(start, to_world(record.obs_before, record.pick, record.place), task.sim, task.bounds)


# worker entry points; each takes one picklable tuple


def _near_target_job(args: Tuple[Task, CollectionConfig, int, int]) -> ParticleSystem:
    task, cfg, seed, index = args
    rng_seed = int(np.random.SeedSequence([seed, _NEAR_TARGET, index]).generate_state(1)[0])
    return gen_near_target_state(task, rng_seed, cfg.near_target_jitter)


def _expansion_job(args: Tuple[Task, ParticleSystem, CollectionConfig, int, int, int]) -> Optional[Expansion]:
    task, state, cfg, seed, stage, index = args
    return fold_to_unfold_expand(task, state, cfg, job_rng(seed, _EXPANSION, stage, index))


def _sampling_job(args: Tuple[Task, Expansion, CollectionConfig, int, int, int, int]) -> List[InteractionRecord]:
    task, start, cfg, seed, stage, index, count = args
    rng = job_rng(seed, _SAMPLING, stage, index)
    return sample_interactions(task, start.state, count, cfg, rng, stage, start.action.reversed())


def _expand_stage(
    task: Task, pool: List[ParticleSystem], cfg: CollectionConfig, seed: int, stage: int, threads: int
) -> Tuple[List[Expansion], int]:
    accepted: List[Expansion] = []
    attempts = 0
    while len(accepted) < cfg.starts_per_stage and attempts < cfg.max_expansion_attempts:
        batch = min(cfg.starts_per_stage, cfg.max_expansion_attempts - attempts)
        jobs = [(task, pool[(attempts + j) % len(pool)], cfg, seed, stage, attempts + j) for j in range(batch)]
        results = parallel_map(_expansion_job, jobs, threads)
        attempts += batch
        accepted.extend(r for r in results if r is not None)
    rate = len(accepted) / attempts
    if not accepted or rate < cfg.acceptance_floor:
        raise ExpansionStarvation(
            "stage {}: {} of {} expansions accepted ({:.1%}), below the floor of {:.1%}".format(
                stage, len(accepted), attempts, rate, cfg.acceptance_floor
            )
        )
    if len(accepted) < cfg.starts_per_stage:
        logger.warning("stage %d: only %d of %d start states accepted", stage, len(accepted), cfg.starts_per_stage)
    return accepted[:cfg.starts_per_stage], attempts


def collect(task: Task, cfg: CollectionConfig, seed: int = 0, threads: int = 1) -> Collection:
    """Build every stage's dataset together with a collection report."""
    cfg = cfg.resolve(task.spacing)
    cfg.validate()
    run_print = fingerprint(task, cfg, seed)
    pool = parallel_map(_near_target_job, [(task, cfg, seed, k) for k in range(cfg.starts_per_stage)], threads)

    datasets: List[StageDataset] = []
    reports: List[StageReport] = []
    for stage in range(1, cfg.num_stages + 1):
        starts, attempts = _expand_stage(task, pool, cfg, seed, stage, threads)
        n_jobs = -(-cfg.records_per_stage // cfg.actions_per_state)
        jobs = [
            (
                task,
                starts[k % len(starts)],
                cfg,
                seed,
                stage,
                k,
                min(cfg.actions_per_state, cfg.records_per_stage - k * cfg.actions_per_state),
            )
            for k in range(n_jobs)
        ]
        records = [r for chunk in parallel_map(_sampling_job, jobs, threads) for r in chunk]
        datasets.append(StageDataset(stage, records, run_print, seed, task.bounds, (task.grid, task.grid)))

        dists = np.array([r.dist_after for r in records])
        report = StageReport(
            stage=stage,
            attempts=attempts,
            accepted=len(starts),
            acceptance_rate=len(starts) / attempts,
            mean_similarity=float(np.mean([e.similarity for e in starts])),
            records=len(records),
            nograsp=sum(1 for r in records if r.outcome == Outcome.NOGRASP),
            mean_dist_after=float(dists.mean()) if len(dists) else 0.0,
            dist_histogram=np.histogram(dists, bins=10, range=(0.0, 1.0))[0].tolist(),
        )
        reports.append(report)
        logger.info(
            "stage %d: %d/%d expansions accepted, %d records, mean dist %.4f",
            stage,
            report.accepted,
            attempts,
            report.records,
            report.mean_dist_after,
        )
        pool = [e.state for e in starts]
    return Collection(datasets, reports)


def build_stage_datasets(task: Task, cfg: CollectionConfig, seed: int = 0, threads: int = 1) -> List[StageDataset]:
    return collect(task, cfg, seed, threads).datasets


# Dataset files, little-endian:
#   header | records | sha256 of everything before it
# header: magic, version, raw fingerprint, stage, seed, rows, cols, bounds, record count
# record: stage, outcome, pick, place, dist_after, obs_before, obs_after, state_before, state_after
# observation: occupancy bytes, float64 heights, clipped count
# state: u32 length then the encoded particle system

DATASET_MAGIC = b"FADS"
DATASET_VERSION = 1
_FILE_HEADER = struct.Struct("<4sH32sIQII4dI")
_RECORD_HEADER = struct.Struct("<IB4id")
_DIGEST = hashlib.sha256().digest_size


def _encode_obs(obs: Observation) -> bytes:
    return (
        np.ascontiguousarray(obs.occupancy, dtype=np.uint8).tobytes()
        + np.ascontiguousarray(obs.height_map, dtype="<f8").tobytes()
        + struct.pack("<I", obs.clipped)
    )


def encode_record(record: InteractionRecord) -> bytes:
    head = _RECORD_HEADER.pack(
        record.stage, int(record.outcome), *record.pick, *record.place, record.dist_after
    )
    states = b"".join(struct.pack("<I", len(s)) + s for s in (record.state_before, record.state_after))
    return head + _encode_obs(record.obs_before) + _encode_obs(record.obs_after) + states


def encode_dataset(dataset: StageDataset) -> bytes:
    m, n = dataset.grid
    b = dataset.bounds
    header = _FILE_HEADER.pack(
        DATASET_MAGIC,
        DATASET_VERSION,
        bytes.fromhex(dataset.fingerprint),
        dataset.stage,
        dataset.seed,
        m,
        n,
        b.xmin,
        b.ymin,
        b.xmax,
        b.ymax,
        len(dataset.records),
    )
    body = header + b"".join(encode_record(r) for r in dataset.records)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data: bytes, offset: int = 0) -> None:
        self.data = data
        self.offset = offset

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise DatasetFormatError("dataset record is truncated")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, st: struct.Struct) -> Tuple:
        return st.unpack(self.take(st.size))


def _decode_obs(reader: _Reader, m: int, n: int, bounds: Bounds) -> Observation:
    occupancy = np.frombuffer(reader.take(m * n), dtype=np.uint8).reshape(m, n).copy()
    height = np.frombuffer(reader.take(8 * m * n), dtype="<f8").reshape(m, n).astype(np.float64)
    (clipped,) = struct.unpack("<I", reader.take(4))
    return Observation(occupancy, height, bounds, clipped)


def decode_dataset(data: bytes) -> StageDataset:
    if len(data) < _FILE_HEADER.size + _DIGEST:
        raise ChecksumError("dataset is truncated ({} bytes)".format(len(data)))
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("dataset checksum mismatch")
    reader = _Reader(body)
    magic, version, raw_print, stage, seed, m, n, xmin, ymin, xmax, ymax, count = reader.unpack(_FILE_HEADER)
    if magic != DATASET_MAGIC:
        raise DatasetFormatError("not a dataset file (magic {!r})".format(magic))
    if version != DATASET_VERSION:
        raise VersionMismatch("dataset version {} is not supported (expected {})".format(version, DATASET_VERSION))
    bounds = Bounds(xmin, ymin, xmax, ymax)
    records = []
    for _ in range(count):
        rec_stage, outcome, pr, pc, qr, qc, dist = reader.unpack(_RECORD_HEADER)
        obs_before = _decode_obs(reader, m, n, bounds)
        obs_after = _decode_obs(reader, m, n, bounds)
        blobs = []
        for _ in range(2):
            (size,) = struct.unpack("<I", reader.take(4))
            blobs.append(reader.take(size))
        records.append(
            InteractionRecord(
                obs_before,
                blobs[0],
                GridCoord(pr, pc),
                GridCoord(qr, qc),
                obs_after,
                blobs[1],
                dist,
                rec_stage,
                Outcome(outcome),
            )
        )
    if reader.offset != len(body):
        raise DatasetFormatError("{} trailing bytes after the records".format(len(body) - reader.offset))
    return StageDataset(stage, records, raw_print.hex(), seed, bounds, (m, n))


def dataset_filename(stage: int) -> str:
    return "stage{}.fads".format(stage)


def save_dataset(dataset: StageDataset, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_dataset(dataset))
    logger.info("saved %d stage-%d records to %s", len(dataset), dataset.stage, path)


def load_dataset(path: Union[str, Path]) -> StageDataset:
    return decode_dataset(Path(path).read_bytes())


def export_jsonl(dataset: StageDataset, path: Union[str, Path]) -> None:
    """One JSON object per record, with the particle states as base64 blobs."""
    with open(path, "w") as f:
        for index, r in enumerate(dataset.records):
            line = {
                "index": index,
                "stage": r.stage,
                "outcome": r.outcome.name,
                "pick": list(r.pick),
                "place": list(r.place),
                "dist_after": r.dist_after,
                "occupied_before": int(np.count_nonzero(r.obs_before.occupancy)),
                "occupied_after": int(np.count_nonzero(r.obs_after.occupancy)),
                "state_before": base64.b64encode(r.state_before).decode("ascii"),
                "state_after": base64.b64encode(r.state_after).decode("ascii"),
            }
            f.write(json.dumps(line, sort_keys=True) + "\n")

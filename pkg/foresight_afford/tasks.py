# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Manipulation tasks.

A task bundles an object, its workspace and grid, its target and the metric
used to score episodes. ``TASKS`` maps task names to task classes.
"""

import math
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .metrics import (
    KEYPOINTS,
    ClothFlat,
    RingArea,
    RingCircle,
    RopeShape,
    TargetSpec,
    convex_hull_success,
    disc_coverage,
    dist_to_target,
    hull_area_ratio,
    ideal_area,
    rope_matching_cost,
)
from .perception import Observation, coverage, rasterize
from .sim import ParticleSystem, SimConfig, build_cloth, build_ring, build_rope, perturb_drop
from .workspace import Bounds


class Task:
    """Base class for tasks."""

    NAME: str
    METRIC_GOAL: float = 1.0
    # grid cells covered by each particle splat, in cell widths
    SPLAT_CELLS = 0.6

    def __init__(
        self,
        grid: int = 64,
        half_extent: float = 0.32,
        spacing: float = 0.015,
        sim: Optional[SimConfig] = None,
        metric_goal: Optional[float] = None,
    ) -> None:
        self.grid = grid
        self.half_extent = half_extent
        self.spacing = spacing
        self.bounds = Bounds.square(half_extent)
        self.sim = sim if sim is not None else SimConfig.for_spacing(spacing)
        self.sim.validate()
        self.metric_goal = self.METRIC_GOAL if metric_goal is None else metric_goal
        self.splat_radius = self.SPLAT_CELLS * self.bounds.width / grid
        self._target: Optional[TargetSpec] = None

    def params(self) -> Dict[str, Any]:
        """Constructor arguments that define the task, for fingerprints."""
        return {
            "grid": self.grid,
            "half_extent": self.half_extent,
            "spacing": self.spacing,
            "metric_goal": self.metric_goal,
        }

    def describe(self) -> Dict[str, Any]:
        return {"task": self.NAME, "params": self.params()}

    def build_object(self) -> ParticleSystem:
        """Canonical undisturbed object, the starting point of perturbations."""
        return NotImplemented

    def target_state(self) -> ParticleSystem:
        """An object laid exactly on the target."""
        return NotImplemented

    def make_target(self) -> TargetSpec:
        return NotImplemented

    @property
    def target(self) -> TargetSpec:
        if self._target is None:
            self._target = self.make_target()
        return self._target

    def initial_state(self, seed: int, num_drops: int = 5) -> ParticleSystem:
        """Crumpled starting state for rollouts, reproducible from ``seed``."""
        return perturb_drop(self.build_object(), self.sim, seed, num_drops, self.bounds)

    def observe(self, system: ParticleSystem) -> Observation:
        return rasterize(system, self.bounds, self.grid, self.grid, self.splat_radius)

    def distance(self, system: ParticleSystem, obs: Optional[Observation] = None) -> float:
        return dist_to_target(system, obs if obs is not None else self.observe(system), self.target)

    def metric(self, system: ParticleSystem, obs: Optional[Observation] = None) -> float:
        """Benchmark measurement; higher is better and ``metric_goal`` marks the target."""
        return NotImplemented

    def success(self, system: ParticleSystem) -> Optional[bool]:
        return None


class SpreadCloth(Task):
    NAME = "SpreadCloth"

    def __init__(self, rows: int = 20, cols: int = 20, **kwargs: Any) -> None:
        self.rows = rows
        self.cols = cols
        super().__init__(**kwargs)

    def params(self) -> Dict[str, Any]:
        return dict(super().params(), rows=self.rows, cols=self.cols)

    def build_object(self) -> ParticleSystem:
        return build_cloth(self.rows, self.cols, self.spacing)

    def target_state(self) -> ParticleSystem:
        return self.build_object()

    def make_target(self) -> TargetSpec:
        return ClothFlat(coverage(self.observe(self.build_object())))

    def metric(self, system: ParticleSystem, obs: Optional[Observation] = None) -> float:
        target = self.target
        assert isinstance(target, ClothFlat)
        return coverage(obs if obs is not None else self.observe(system)) / target.flat_coverage


def s_curve(length: float, u: np.ndarray) -> np.ndarray:
    """Points at arc lengths ``u`` along an 'S' of total ``length`` centred on the origin.

    The upper half bulges towards -x and the lower half towards +x.
    """
    radius = length / (2.0 * math.pi)
    u = np.asarray(u, dtype=np.float64)
    out = np.empty((len(u), 2))
    upper = u <= length / 2.0
    theta = math.pi / 2.0 + u[upper] / radius
    out[upper, 0] = radius * np.cos(theta)
    out[upper, 1] = radius + radius * np.sin(theta)
    theta = math.pi / 2.0 - (u[~upper] - length / 2.0) / radius
    out[~upper, 0] = radius * np.cos(theta)
    out[~upper, 1] = -radius + radius * np.sin(theta)
    return out


class RopeConfiguration(Task):
    NAME = "RopeConfiguration"
    METRIC_GOAL = -0.04

    def __init__(self, n_particles: int = 24, keypoints: int = KEYPOINTS, **kwargs: Any) -> None:
        self.n_particles = n_particles
        self.keypoints = keypoints
        super().__init__(**kwargs)

    def params(self) -> Dict[str, Any]:
        return dict(super().params(), n_particles=self.n_particles, keypoints=self.keypoints)

    @property
    def length(self) -> float:
        return (self.n_particles - 1) * self.spacing

    def build_object(self) -> ParticleSystem:
        return build_rope(self.n_particles, self.spacing)

    def target_state(self) -> ParticleSystem:
        rope = self.build_object()
        rope.positions[:, :2] = s_curve(self.length, np.arange(self.n_particles) * self.spacing)
        return rope

    def make_target(self) -> TargetSpec:
        points = s_curve(self.length, np.linspace(0.0, self.length, self.keypoints))
        return RopeShape(tuple((float(x), float(y)) for x, y in points))

    def metric(self, system: ParticleSystem, obs: Optional[Observation] = None) -> float:
        """Negative mean matched keypoint distance, in metres."""
        target = self.target
        assert isinstance(target, RopeShape)
        return -rope_matching_cost(system, target) / len(target.keypoints)


class CableRing(Task):
    NAME = "CableRing"

    def __init__(self, n_particles: int = 32, success_threshold: float = 0.75, **kwargs: Any) -> None:
        self.n_particles = n_particles
        self.success_threshold = success_threshold
        super().__init__(**kwargs)

    def params(self) -> Dict[str, Any]:
        return dict(super().params(), n_particles=self.n_particles, success_threshold=self.success_threshold)

    def build_object(self) -> ParticleSystem:
        return build_ring(self.n_particles, self.spacing)

    def target_state(self) -> ParticleSystem:
        return self.build_object()

    def make_target(self) -> TargetSpec:
        return RingArea(ideal_area(self.build_object()))

    def metric(self, system: ParticleSystem, obs: Optional[Observation] = None) -> float:
        return hull_area_ratio(system)

    def success(self, system: ParticleSystem, threshold: Optional[float] = None) -> Optional[bool]:
        return convex_hull_success(system, self.success_threshold if threshold is None else threshold)


class CableRingTarget(CableRing):
    """Ring task with a target: the ring has to enclose a circle drawn on the table.

    The circle is the one inscribed in the ring laid flat around
    ``target_center``, while rollouts start from a ring crumpled at the origin.
    """

    NAME = "CableRingTarget"

    def __init__(self, target_center: Sequence[float] = (0.08, 0.0), **kwargs: Any) -> None:
        if len(target_center) != 2:
            raise ValueError("target_center must be an (x, y) pair, got {!r}".format(target_center))
        self.target_center = (float(target_center[0]), float(target_center[1]))
        super().__init__(**kwargs)
        if not self.bounds.contains(*self.target_center):
            raise ValueError("target center {} lies outside the workspace".format(self.target_center))

    def params(self) -> Dict[str, Any]:
        return dict(super().params(), target_center=list(self.target_center))

    @property
    def target_radius(self) -> float:
        return self.spacing / (2.0 * math.tan(math.pi / self.n_particles))

    def target_state(self) -> ParticleSystem:
        ring = self.build_object()
        ring.positions[:, :2] += np.asarray(self.target_center)
        return ring

    def make_target(self) -> TargetSpec:
        return RingCircle(self.target_center, self.target_radius)

    def metric(self, system: ParticleSystem, obs: Optional[Observation] = None) -> float:
        """Fraction of the target circle enclosed by the ring."""
        target = self.target
        assert isinstance(target, RingCircle)
        return disc_coverage(system, target)

    def success(self, system: ParticleSystem, threshold: Optional[float] = None) -> Optional[bool]:
        return self.metric(system) >= (self.success_threshold if threshold is None else threshold)


TASKS = {
    SpreadCloth.NAME: SpreadCloth,
    RopeConfiguration.NAME: RopeConfiguration,
    CableRing.NAME: CableRing,
    CableRingTarget.NAME: CableRingTarget,
}


def make_task(name: str, **params: Any) -> Task:
    if name not in TASKS:
        raise ValueError("unknown task {!r}; expected one of {}".format(name, sorted(TASKS)))
    return TASKS[name](**params)  # type: ignore

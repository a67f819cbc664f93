# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Task targets, distances and benchmark metrics.
"""

import math
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from .errors import DegenerateScore, MismatchedTarget, ShapeError
from .perception import Observation, coverage
from .sim import Cloth, ParticleSystem, Ring, Rope

KEYPOINTS = 10
# lattice points per side of the square sampling a target disc
DISC_SAMPLES = 48


@dataclass(frozen=True)
class ClothFlat:
    flat_coverage: float

    def __post_init__(self) -> None:
        if not 0 < self.flat_coverage <= 1:
            raise ValueError("flat coverage must lie in (0, 1], got {}".format(self.flat_coverage))


@dataclass(frozen=True)
class RopeShape:
    keypoints: Tuple[Tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.keypoints) < 2 or len(set(self.keypoints)) != len(self.keypoints):
            raise ValueError("a rope target needs at least 2 distinct keypoints")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.keypoints, dtype=np.float64)


@dataclass(frozen=True)
class RingArea:
    ideal_area: float

    def __post_init__(self) -> None:
        if not self.ideal_area > 0:
            raise ValueError("ideal area must be positive")


@dataclass(frozen=True)
class RingCircle:
    """Disc the ring has to enclose, for the ring task with a target."""

    center: Tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("target circle radius must be positive")


TargetSpec = Union[ClothFlat, RopeShape, RingArea, RingCircle]


def hungarian(cost: np.ndarray) -> Tuple[List[int], float]:
    """Minimum-cost perfect matching of a square cost matrix.

    Shortest augmenting paths with row and column potentials, O(K^3).
    Return ``(assignment, total_cost)`` where row ``i`` is matched to column
    ``assignment[i]``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ShapeError("cost matrix must be square, got shape {}".format(cost.shape))
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix has non-finite entries")
    if np.any(cost < 0):
        raise ValueError("cost matrix has negative entries")
    k = cost.shape[0]
    if k == 0:
        return [], 0.0

    # 1-based potentials; column 0 is the virtual start of each augmenting path
    u = [0.0] * (k + 1)
    v = [0.0] * (k + 1)
    owner = [0] * (k + 1)
    way = [0] * (k + 1)
    for row in range(1, k + 1):
        owner[0] = row
        col0 = 0
        minv = [math.inf] * (k + 1)
        used = [False] * (k + 1)
        while True:
            used[col0] = True
            r0 = owner[col0]
            delta = math.inf
            col1 = 0
            for col in range(1, k + 1):
                if used[col]:
                    continue
                reduced = cost[r0 - 1, col - 1] - u[r0] - v[col]
                if reduced < minv[col]:
                    minv[col] = reduced
                    way[col] = col0
                if minv[col] < delta:
                    delta = minv[col]
                    col1 = col
            for col in range(k + 1):
                if used[col]:
                    u[owner[col]] += delta
                    v[col] -= delta
                else:
                    minv[col] -= delta
            col0 = col1
            if owner[col0] == 0:
                break
        while col0:
            col1 = way[col0]
            owner[col0] = owner[col1]
            col0 = col1

    assignment = [-1] * k
    for col in range(1, k + 1):
        assignment[owner[col] - 1] = col - 1
    total = float(sum(cost[i, assignment[i]] for i in range(k)))
    return assignment, total


def rope_keypoints(system: ParticleSystem, k: int = KEYPOINTS) -> np.ndarray:
    """``k`` table-plane points evenly spaced by arc length along the chain."""
    xy = system.positions[:, :2]
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(xy, axis=0), axis=1))])
    if arc[-1] == 0.0:
        return np.repeat(xy[:1], k, axis=0)
    t = np.linspace(0.0, arc[-1], k)
    return np.stack([np.interp(t, arc, xy[:, 0]), np.interp(t, arc, xy[:, 1])], axis=1)


def target_placements(keypoints: np.ndarray) -> List[np.ndarray]:
    """The canonical target, its three other quarter turns and two mirror images.

    Transforms act about the keypoint centroid.
    """
    centroid = keypoints.mean(axis=0)
    d = keypoints - centroid
    x, y = d[:, 0], d[:, 1]
    variants = [
        d,
        np.stack([-y, x], axis=1),
        np.stack([-x, -y], axis=1),
        np.stack([y, -x], axis=1),
        np.stack([-x, y], axis=1),
        np.stack([x, -y], axis=1),
    ]
    return [centroid + v for v in variants]


def rope_matching_cost(system: ParticleSystem, target: RopeShape) -> float:
    """Smallest total keypoint matching distance over the target placements."""
    goal = target.as_array()
    points = rope_keypoints(system, len(goal))
    best = math.inf
    for placed in target_placements(goal):
        cost = np.linalg.norm(points[:, None, :] - placed[None, :, :], axis=2)
        best = min(best, hungarian(cost)[1])
    return best


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull vertices by Andrew's monotone chain."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64)[:, :2].tolist())))
    if len(pts) <= 2:
        return np.asarray(pts, dtype=np.float64).reshape(-1, 2)

    def cross(o: Tuple[float, float], a: Tuple[float, float], b: Tuple[float, float]) -> float:
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: List[Tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[Tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1], dtype=np.float64)


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area of a simple polygon; 0 for fewer than three vertices."""
    if len(vertices) < 3:
        return 0.0
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def ideal_area(system: ParticleSystem) -> float:
    """Area of the circle whose circumference is the chain's rest length."""
    length = system.total_length
    return length * length / (4.0 * math.pi)


def hull_area_ratio(system: ParticleSystem) -> float:
    return polygon_area(convex_hull(system.positions)) / ideal_area(system)


def points_in_hull(hull: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Mask of ``points`` inside or on a counter-clockwise convex hull."""
    if len(hull) < 3:
        return np.zeros(len(points), dtype=bool)
    edge = np.roll(hull, -1, axis=0) - hull
    rel = points[None, :, :] - hull[:, None, :]
    cross = edge[:, None, 0] * rel[..., 1] - edge[:, None, 1] * rel[..., 0]
    return np.all(cross >= -1e-12, axis=0)


def disc_samples(circle: RingCircle, per_side: int = DISC_SAMPLES) -> np.ndarray:
    u = (np.arange(per_side) + 0.5) / per_side * 2.0 - 1.0
    gx, gy = np.meshgrid(u, u)
    inside = gx * gx + gy * gy <= 1.0
    cx, cy = circle.center
    return np.stack([cx + circle.radius * gx[inside], cy + circle.radius * gy[inside]], axis=1)


def disc_coverage(system: ParticleSystem, circle: RingCircle) -> float:
    """Fraction of the target disc enclosed by the convex hull of the particles."""
    samples = disc_samples(circle)
    return float(np.mean(points_in_hull(convex_hull(system.positions), samples)))


def convex_hull_success(system: ParticleSystem, threshold: float = 0.75) -> bool:
    if system.n_particles < 3:
        raise ValueError("convex hull success needs at least 3 particles")
    return hull_area_ratio(system) >= threshold


def dist_to_target(system: ParticleSystem, obs: Observation, target: TargetSpec) -> float:
    """Distance of a state to the task target, in [0, 1]; 0 at the target."""
    if isinstance(target, ClothFlat):
        if not isinstance(system.topology, Cloth):
            raise MismatchedTarget("flat-cloth target needs a cloth, got {}".format(system.topology))
        d = 1.0 - coverage(obs) / target.flat_coverage
    elif isinstance(target, RopeShape):
        if not isinstance(system.topology, Rope):
            raise MismatchedTarget("rope-shape target needs a rope, got {}".format(system.topology))
        d = rope_matching_cost(system, target) / (obs.bounds.diagonal * len(target.keypoints))
    elif isinstance(target, RingArea):
        if not isinstance(system.topology, Ring):
            raise MismatchedTarget("ring-area target needs a ring, got {}".format(system.topology))
        d = 1.0 - polygon_area(convex_hull(system.positions)) / target.ideal_area
    elif isinstance(target, RingCircle):
        if not isinstance(system.topology, Ring):
            raise MismatchedTarget("ring-circle target needs a ring, got {}".format(system.topology))
        d = 1.0 - disc_coverage(system, target)
    else:
        raise MismatchedTarget("unknown target {!r}".format(target))
    return min(max(d, 0.0), 1.0)


def normalized_score(metric_initial: float, metric_final: float, metric_goal: float) -> float:
    """``(final - initial) / (goal - initial)``, unclamped."""
    if metric_goal == metric_initial:
        raise DegenerateScore("goal metric equals initial metric ({})".format(metric_goal))
    return (metric_final - metric_initial) / (metric_goal - metric_initial)


def clamp_score(score: float) -> float:
    return min(max(score, 0.0), 1.0)

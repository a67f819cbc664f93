# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Kinematic pick-and-place primitive and the random lift-and-drop initializer.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import NoGraspableParticle
from ..workspace import Bounds
from .particles import ParticleSystem
from .solver import SimConfig, settle, step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WorldAction:
    pick_point: Tuple[float, float]
    place_point: Tuple[float, float]

    def reversed(self) -> "WorldAction":
        return WorldAction(self.place_point, self.pick_point)

    def length(self) -> float:
        return math.hypot(self.place_point[0] - self.pick_point[0], self.place_point[1] - self.pick_point[1])


def nearest_particle(system: ParticleSystem, point: Tuple[float, float], radius: float) -> int:
    """Index of the particle closest to ``point`` in the table plane.

    Ties go to the lowest index. Raise ``NoGraspableParticle`` when the closest
    particle is farther than ``radius``.
    """
    d = np.hypot(system.positions[:, 0] - point[0], system.positions[:, 1] - point[1])
    index = int(np.argmin(d))
    if d[index] > radius:
        raise NoGraspableParticle(
            "no particle within {:.4f} m of ({:.4f}, {:.4f})".format(radius, point[0], point[1])
        )
    return index


def _move_held(system: ParticleSystem, index: int, target: np.ndarray, cfg: SimConfig) -> ParticleSystem:
    """Carry particle ``index`` in a straight line, one solver step per segment."""
    start = system.positions[index].copy()
    delta = target - start
    segments = max(1, int(math.ceil(np.linalg.norm(delta) / (cfg.move_speed * cfg.dt))))
    current = system
    for s in range(1, segments + 1):
        current.positions[index] = start + delta * (s / segments)
        current = step(current, cfg)
    return current


def _grab(system: ParticleSystem, index: int) -> Tuple[ParticleSystem, float]:
    held = system.copy()
    weight = float(held.inverse_masses[index])
    held.inverse_masses = held.inverse_masses.copy()
    held.inverse_masses[index] = 0.0
    held.velocities[index] = 0.0
    return held, weight


def _release(system: ParticleSystem, index: int, weight: float) -> ParticleSystem:
    """Let go of particle ``index``. The carried object is put down at rest."""
    out = system.copy()
    out.inverse_masses = out.inverse_masses.copy()
    out.inverse_masses[index] = weight
    out.velocities = np.zeros_like(out.velocities)
    return out


def execute_pick_place(
    system: ParticleSystem, action: WorldAction, cfg: SimConfig, bounds: Optional[Bounds] = None
) -> ParticleSystem:
    """Grab, lift to ``lift_height``, carry above the place point, lower, release and settle."""
    if bounds is not None:
        for x, y in (action.pick_point, action.place_point):
            if not bounds.contains(x, y):
                raise ValueError("action point ({}, {}) lies outside the workspace".format(x, y))
    index = nearest_particle(system, action.pick_point, cfg.grab_radius)
    current, weight = _grab(system, index)
    origin = current.positions[index].copy()
    height = max(cfg.lift_height, float(origin[2]))
    px, py = action.place_point

    current = _move_held(current, index, np.array([origin[0], origin[1], height]), cfg)
    current = _move_held(current, index, np.array([px, py, height]), cfg)
    current = _move_held(current, index, np.array([px, py, 0.0]), cfg)
    current = _release(current, index, weight)
    result = settle(current, cfg)
    logger.debug("pick-place particle %d -> (%.3f, %.3f) settled in %d steps", index, px, py, result.steps)
    return result.system


def perturb_drop(
    system: ParticleSystem,
    cfg: SimConfig,
    rng_seed: int,
    num_drops: int = 5,
    bounds: Optional[Bounds] = None,
) -> ParticleSystem:
    """Crumple an object by repeatedly lifting a random particle, shifting it and letting go."""
    rng = np.random.default_rng(rng_seed)
    current = settle(system, cfg).system
    low, high = cfg.perturb_lift_range
    for _ in range(num_drops):
        index = int(rng.integers(current.n_particles))
        height = float(rng.uniform(low, high))
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        radius = float(rng.uniform(0.0, cfg.perturb_shift))
        x = float(current.positions[index, 0]) + radius * math.cos(angle)
        y = float(current.positions[index, 1]) + radius * math.sin(angle)
        if bounds is not None:
            x, y = bounds.clamp(x, y, margin=cfg.grab_radius)

        held, weight = _grab(current, index)
        origin = held.positions[index].copy()
        held = _move_held(held, index, np.array([origin[0], origin[1], height]), cfg)
        held = _move_held(held, index, np.array([x, y, height]), cfg)
        current = settle(_release(held, index, weight), cfg).system
    return current

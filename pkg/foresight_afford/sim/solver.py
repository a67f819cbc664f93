# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Position-based dynamics.

Each substep predicts positions under gravity, projects the distance
constraints with colour-ordered Gauss-Seidel sweeps, clamps particles to the
table plane, then derives velocities from the position change.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

from .particles import ParticleSystem, max_constraint_violation

logger = logging.getLogger(__name__)

GROUND_TOLERANCE = 1e-9
# particles at or below this height count as touching the table
CONTACT_HEIGHT = 1e-6
RELAX_THRESHOLD = 0.01
# relative rise in potential energy tolerated before a settle step is redone from rest
ENERGY_TOLERANCE = 1e-9
DEFAULT_SPACING = 0.015


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    substeps: int = 1
    solver_iterations: int = 20
    gravity: float = 9.8
    damping: float = 0.02
    ground_friction: float = 0.3
    grab_radius: float = 1.5 * DEFAULT_SPACING
    lift_height: float = 6 * DEFAULT_SPACING
    move_speed: float = 0.5
    settle_velocity_eps: float = 0.01
    settle_max_steps: int = 300
    perturb_lift_range: Tuple[float, float] = (4 * DEFAULT_SPACING, 10 * DEFAULT_SPACING)
    perturb_shift: float = 6 * DEFAULT_SPACING

    @classmethod
    def for_spacing(cls, spacing: float, **overrides: object) -> "SimConfig":
        """Defaults scaled to an object's particle spacing."""
        scaled = cls(
            grab_radius=1.5 * spacing,
            lift_height=6 * spacing,
            perturb_lift_range=(4 * spacing, 10 * spacing),
            perturb_shift=6 * spacing,
        )
        return replace(scaled, **overrides)  # type: ignore

    def validate(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.substeps < 1 or self.solver_iterations < 1:
            raise ValueError("substeps and solver_iterations must be at least 1")
        if not 0 <= self.damping <= 1:
            raise ValueError("damping must lie in [0, 1]")
        if not 0 <= self.ground_friction <= 1:
            raise ValueError("ground_friction must lie in [0, 1]")
        positive = {
            "grab_radius": self.grab_radius,
            "lift_height": self.lift_height,
            "move_speed": self.move_speed,
            "settle_velocity_eps": self.settle_velocity_eps,
            "settle_max_steps": self.settle_max_steps,
            "perturb_shift": self.perturb_shift,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError("{} must be positive, got {}".format(name, value))
        low, high = self.perturb_lift_range
        if not 0 < low <= high:
            raise ValueError("perturb_lift_range must satisfy 0 < low <= high")


@dataclass
class SettleResult:
    system: ParticleSystem
    steps: int
    converged: bool
    energies: List[float] = field(default_factory=list)


def _project(p: np.ndarray, w: np.ndarray, system: ParticleSystem, h: float) -> None:
    a = system.arrays()
    for color in a.colors:
        i = a.i[color]
        j = a.j[color]
        d = p[j] - p[i]
        length = np.sqrt(np.einsum("ij,ij->i", d, d))
        wi = w[i]
        wj = w[j]
        denom = wi + wj + a.compliance[color] / (h * h)
        ok = (denom > 0) & (length > 1e-12)
        scale = np.zeros_like(length)
        scale[ok] = (length[ok] - a.rest[color][ok]) / (denom[ok] * length[ok])
        corr = d * scale[:, None]
        # no particle repeats inside a colour
        p[i] += wi[:, None] * corr
        p[j] -= wj[:, None] * corr


def _clamp_ground(p: np.ndarray, free: np.ndarray) -> None:
    below = free & (p[:, 2] < 0.0)
    p[below, 2] = 0.0


def _kinetic_energy(v: np.ndarray, w: np.ndarray, free: np.ndarray) -> float:
    return float(0.5 * np.sum(np.einsum("ij,ij->i", v[free], v[free]) / w[free]))


def step(system: ParticleSystem, cfg: SimConfig) -> ParticleSystem:
    """Advance one time step. Held particles (inverse mass 0) keep their position.

    With nothing held no work is done on the object, so the velocities of a
    substep are scaled down whenever kinetic plus potential energy would grow.
    """
    out = system.copy()
    w = out.inverse_masses
    free = w > 0
    h = cfg.dt / cfg.substeps
    accel = np.array([0.0, 0.0, -cfg.gravity])
    capped = bool(np.all(free))
    budget = 0.0
    for _ in range(cfg.substeps):
        x = out.positions
        v = out.velocities
        if capped:
            budget = potential_energy(out, cfg) + _kinetic_energy(v, w, free)
        p = x + h * v
        p[free] += 0.5 * h * h * accel
        p[~free] = x[~free]
        for _ in range(cfg.solver_iterations):
            _project(p, w, out, h)
            _clamp_ground(p, free)
        v = (p - x) / h
        v *= 1.0 - cfg.damping
        contact = free & (p[:, 2] <= CONTACT_HEIGHT)
        v[contact, :2] *= 1.0 - cfg.ground_friction
        v[contact, 2] = np.maximum(v[contact, 2], 0.0)
        v[~free] = 0.0
        out.positions = p
        if capped:
            kinetic = _kinetic_energy(v, w, free)
            spare = budget - potential_energy(out, cfg)
            if kinetic > max(spare, 0.0):
                v *= np.sqrt(max(spare, 0.0) / kinetic)
        out.velocities = v
    return out


def potential_energy(system: ParticleSystem, cfg: SimConfig) -> float:
    """Gravitational energy of free particles plus elastic energy of compliant constraints."""
    w = system.inverse_masses
    free = w > 0
    gravitational = float(np.sum(cfg.gravity * system.positions[free, 2] / w[free]))
    a = system.arrays()
    compliant = a.compliance > 0
    if not np.any(compliant):
        return gravitational
    d = system.positions[a.j[compliant]] - system.positions[a.i[compliant]]
    stretch = np.linalg.norm(d, axis=1) - a.rest[compliant]
    return gravitational + float(np.sum(0.5 * stretch * stretch / a.compliance[compliant]))


def max_speed(system: ParticleSystem) -> float:
    free = system.inverse_masses > 0
    if not np.any(free):
        return 0.0
    return float(np.max(np.linalg.norm(system.velocities[free], axis=1)))


def _at_rest(system: ParticleSystem) -> ParticleSystem:
    out = system.copy()
    out.velocities = np.zeros_like(out.velocities)
    return out


def relax(system: ParticleSystem, cfg: SimConfig) -> ParticleSystem:
    """Project constraints without gravity until violations fall under 1%."""
    out = system.copy()
    free = out.inverse_masses > 0
    for _ in range(10 * cfg.solver_iterations):
        if max_constraint_violation(out) < RELAX_THRESHOLD:
            break
        _project(out.positions, out.inverse_masses, out, cfg.dt)
        _clamp_ground(out.positions, free)
    out.velocities = np.zeros_like(out.velocities)
    return out


def settle(system: ParticleSystem, cfg: SimConfig) -> SettleResult:
    """Step until every free particle is slower than ``settle_velocity_eps``.

    Non-convergence within ``settle_max_steps`` is reported through
    ``SettleResult.converged``, never raised.

    The potential energy recorded after each step never rises: a step that
    would raise it is redone from rest, and a state that cannot lose energy
    even from rest is a resting state.
    """
    current = system
    energy = potential_energy(current, cfg)
    energies = [energy]
    converged = False
    steps = 0
    while steps < cfg.settle_max_steps:
        candidate = step(current, cfg)
        candidate_energy = potential_energy(candidate, cfg)
        if candidate_energy > energy + ENERGY_TOLERANCE * abs(energy):
            current = _at_rest(current)
            candidate = step(current, cfg)
            candidate_energy = potential_energy(candidate, cfg)
            if candidate_energy > energy + ENERGY_TOLERANCE * abs(energy):
                steps += 1
                energies.append(energy)
                converged = True
                break
        current, energy = candidate, candidate_energy
        steps += 1
        energies.append(energy)
        if max_speed(current) < cfg.settle_velocity_eps:
            converged = True
            break
    if not converged:
        logger.warning("settle did not converge in %d steps (max speed %.4g)", steps, max_speed(current))
    if len(current.held()) == 0 and max_constraint_violation(current) >= RELAX_THRESHOLD:
        current = relax(current, cfg)
    return SettleResult(current, steps, converged, energies)

# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Particle systems for ropes, rings and cloth.
"""

import math
import struct
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np


@dataclass(frozen=True)
class Rope:
    n_particles: int


@dataclass(frozen=True)
class Ring:
    n_particles: int


@dataclass(frozen=True)
class Cloth:
    rows: int
    cols: int


Topology = Union[Rope, Ring, Cloth]


@dataclass(frozen=True)
class DistanceConstraint:
    i: int
    j: int
    rest_length: float
    compliance: float = 0.0

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise ValueError("constraint joins particle {} to itself".format(self.i))
        if not self.rest_length > 0:
            raise ValueError("rest length must be positive, got {}".format(self.rest_length))
        if self.compliance < 0:
            raise ValueError("compliance must be non-negative")


class ConstraintArrays(NamedTuple):
    """Column view of the constraint list, grouped by colour."""

    i: np.ndarray
    j: np.ndarray
    rest: np.ndarray
    compliance: np.ndarray
    colors: List[np.ndarray]


def color_constraints(constraints: List[DistanceConstraint]) -> List[np.ndarray]:
    """Greedy edge colouring: constraints sharing a colour share no particle.

    Colours are assigned in list order, each constraint taking the smallest
    colour unused by both of its particles.
    """
    used: dict = {}
    groups: List[List[int]] = []
    for index, c in enumerate(constraints):
        taken = used.get(c.i, set()) | used.get(c.j, set())
        color = 0
        while color in taken:
            color += 1
        if color == len(groups):
            groups.append([])
        groups[color].append(index)
        used.setdefault(c.i, set()).add(color)
        used.setdefault(c.j, set()).add(color)
    return [np.asarray(g, dtype=np.int64) for g in groups]


@dataclass
class ParticleSystem:
    positions: np.ndarray
    velocities: np.ndarray
    inverse_masses: np.ndarray
    constraints: List[DistanceConstraint]
    topology: Topology
    _arrays: Optional[ConstraintArrays] = field(default=None, init=False, repr=False, compare=False)

    @property
    def n_particles(self) -> int:
        return int(self.positions.shape[0])

    @property
    def spacing(self) -> float:
        """Smallest structural rest length."""
        return min(c.rest_length for c in self.constraints)

    @property
    def total_length(self) -> float:
        """Summed rest length of the chain (ropes and rings only)."""
        if isinstance(self.topology, Cloth):
            raise ValueError("total length is defined for ropes and rings only")
        return float(sum(c.rest_length for c in self.constraints))

    def arrays(self) -> ConstraintArrays:
        if self._arrays is None:
            cs = self.constraints
            self._arrays = ConstraintArrays(
                i=np.array([c.i for c in cs], dtype=np.int64),
                j=np.array([c.j for c in cs], dtype=np.int64),
                rest=np.array([c.rest_length for c in cs], dtype=np.float64),
                compliance=np.array([c.compliance for c in cs], dtype=np.float64),
                colors=color_constraints(cs),
            )
        return self._arrays

    def held(self) -> np.ndarray:
        """Indices of kinematically held particles."""
        return np.flatnonzero(self.inverse_masses == 0)

    def copy(self) -> "ParticleSystem":
        clone = ParticleSystem(
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            inverse_masses=self.inverse_masses.copy(),
            constraints=self.constraints,
            topology=self.topology,
        )
        clone._arrays = self._arrays
        return clone

    def check(self) -> None:
        """Raise ``ValueError`` if a structural invariant is broken."""
        n = self.n_particles
        if self.positions.shape != (n, 3) or self.velocities.shape != (n, 3):
            raise ValueError("positions and velocities must be n x 3 arrays")
        if self.inverse_masses.shape != (n,) or np.any(self.inverse_masses < 0):
            raise ValueError("inverse masses must be n non-negative scalars")
        if len(self.held()) > 1:
            raise ValueError("at most one particle may be held")
        if isinstance(self.topology, Rope):
            expected = (self.topology.n_particles, self.topology.n_particles - 1)
        elif isinstance(self.topology, Ring):
            expected = (self.topology.n_particles, self.topology.n_particles)
        else:
            r, c = self.topology.rows, self.topology.cols
            expected = (r * c, r * (c - 1) + c * (r - 1) + 2 * (r - 1) * (c - 1))
        if (n, len(self.constraints)) != expected:
            raise ValueError(
                "topology {} expects {} particles and {} constraints".format(self.topology, *expected)
            )


def _system(positions: np.ndarray, constraints: List[DistanceConstraint], topology: Topology) -> ParticleSystem:
    n = positions.shape[0]
    return ParticleSystem(
        positions=positions,
        velocities=np.zeros((n, 3)),
        inverse_masses=np.ones(n),
        constraints=constraints,
        topology=topology,
    )


def build_rope(n_particles: int, spacing: float) -> ParticleSystem:
    """Straight rope along x, centred on the origin, lying on the table."""
    if n_particles < 2:
        raise ValueError("a rope needs at least 2 particles, got {}".format(n_particles))
    if not spacing > 0:
        raise ValueError("spacing must be positive, got {}".format(spacing))
    positions = np.zeros((n_particles, 3))
    positions[:, 0] = (np.arange(n_particles) - (n_particles - 1) / 2.0) * spacing
    constraints = [DistanceConstraint(k, k + 1, spacing) for k in range(n_particles - 1)]
    return _system(positions, constraints, Rope(n_particles))


def build_ring(n_particles: int, spacing: float) -> ParticleSystem:
    """Closed cable laid on a circle whose chords equal ``spacing``."""
    if n_particles < 3:
        raise ValueError("a ring needs at least 3 particles, got {}".format(n_particles))
    if not spacing > 0:
        raise ValueError("spacing must be positive, got {}".format(spacing))
    radius = spacing / (2.0 * math.sin(math.pi / n_particles))
    angles = 2.0 * math.pi * np.arange(n_particles) / n_particles
    positions = np.zeros((n_particles, 3))
    positions[:, 0] = radius * np.cos(angles)
    positions[:, 1] = radius * np.sin(angles)
    constraints = [DistanceConstraint(k, (k + 1) % n_particles, spacing) for k in range(n_particles)]
    return _system(positions, constraints, Ring(n_particles))


def build_cloth(rows: int, cols: int, spacing: float) -> ParticleSystem:
    """Flat square-grid cloth centred on the origin.

    Particle ``(r, c)`` has index ``r * cols + c`` and sits at row ``r`` along y.
    Structural constraints come first (horizontal then vertical), then both
    shear diagonals of every grid square.
    """
    if rows < 2 or cols < 2:
        raise ValueError("cloth needs at least 2 x 2 particles, got {} x {}".format(rows, cols))
    if not spacing > 0:
        raise ValueError("spacing must be positive, got {}".format(spacing))
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    positions = np.zeros((rows * cols, 3))
    positions[:, 0] = ((cc - (cols - 1) / 2.0) * spacing).ravel()
    positions[:, 1] = ((rr - (rows - 1) / 2.0) * spacing).ravel()

    def idx(r: int, c: int) -> int:
        return r * cols + c

    diagonal = spacing * math.sqrt(2.0)
    constraints = [DistanceConstraint(idx(r, c), idx(r, c + 1), spacing) for r in range(rows) for c in range(cols - 1)]
    constraints += [DistanceConstraint(idx(r, c), idx(r + 1, c), spacing) for r in range(rows - 1) for c in range(cols)]
    for r in range(rows - 1):
        for c in range(cols - 1):
            constraints.append(DistanceConstraint(idx(r, c), idx(r + 1, c + 1), diagonal))
            constraints.append(DistanceConstraint(idx(r, c + 1), idx(r + 1, c), diagonal))
    return _system(positions, constraints, Cloth(rows, cols))


def constraint_lengths(system: ParticleSystem) -> np.ndarray:
    a = system.arrays()
    return np.linalg.norm(system.positions[a.j] - system.positions[a.i], axis=1)


def max_constraint_violation(system: ParticleSystem) -> float:
    """Largest ``|l - l0| / l0`` over all constraints."""
    a = system.arrays()
    return float(np.max(np.abs(constraint_lengths(system) - a.rest) / a.rest))


#
# Binary state form, little-endian throughout:
#   magic, version, topology tag, two topology dims, particle count,
#   positions, velocities, inverse masses (float64),
#   constraint count, then (i, j) as int32 and (rest, compliance) as float64.
#

STATE_MAGIC = b"FAPS"
STATE_VERSION = 1
_TOPOLOGY_TAGS = {Rope: 0, Ring: 1, Cloth: 2}
_HEADER = struct.Struct("<4sHBIII")


def encode_state(system: ParticleSystem) -> bytes:
    topo = system.topology
    if isinstance(topo, Cloth):
        dims: Tuple[int, int] = (topo.rows, topo.cols)
    else:
        dims = (topo.n_particles, 0)
    n = system.n_particles
    a = system.arrays()
    parts = [
        _HEADER.pack(STATE_MAGIC, STATE_VERSION, _TOPOLOGY_TAGS[type(topo)], dims[0], dims[1], n),
        system.positions.astype("<f8").tobytes(),
        system.velocities.astype("<f8").tobytes(),
        system.inverse_masses.astype("<f8").tobytes(),
        struct.pack("<I", len(system.constraints)),
        np.stack([a.i, a.j], axis=1).astype("<i4").tobytes(),
        np.stack([a.rest, a.compliance], axis=1).astype("<f8").tobytes(),
    ]
    return b"".join(parts)


def decode_state(blob: bytes) -> ParticleSystem:
    try:
        magic, version, tag, d0, d1, n = _HEADER.unpack_from(blob, 0)
    except struct.error as exc:
        raise ValueError("truncated particle state") from exc
    if magic != STATE_MAGIC:
        raise ValueError("not a particle state blob")
    if version != STATE_VERSION:
        raise ValueError("unsupported particle state version {}".format(version))
    offset = _HEADER.size
    floats = 3 * n * 8

    def take(size: int) -> bytes:
        nonlocal offset
        chunk = blob[offset:offset + size]
        if len(chunk) != size:
            raise ValueError("truncated particle state")
        offset += size
        return chunk

    positions = np.frombuffer(take(floats), dtype="<f8").reshape(n, 3).astype(np.float64)
    velocities = np.frombuffer(take(floats), dtype="<f8").reshape(n, 3).astype(np.float64)
    inverse_masses = np.frombuffer(take(n * 8), dtype="<f8").astype(np.float64)
    (n_constraints,) = struct.unpack("<I", take(4))
    ij = np.frombuffer(take(n_constraints * 8), dtype="<i4").reshape(n_constraints, 2)
    rc = np.frombuffer(take(n_constraints * 16), dtype="<f8").reshape(n_constraints, 2)
    constraints = [
        DistanceConstraint(int(i), int(j), float(rest), float(comp)) for (i, j), (rest, comp) in zip(ij, rc)
    ]
    topology: Topology
    if tag == 0:
        topology = Rope(d0)
    elif tag == 1:
        topology = Ring(d0)
    elif tag == 2:
        topology = Cloth(d0, d1)
    else:
        raise ValueError("unknown topology tag {}".format(tag))
    return ParticleSystem(positions, velocities, inverse_masses, constraints, topology)

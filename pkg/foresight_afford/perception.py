# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Grid observations of particle systems.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import ShapeError
from .sim import ParticleSystem
from .workspace import Bounds, GridCoord

logger = logging.getLogger(__name__)

MIN_GRID = 8
# height channel scale so that typical heights land near [0, 1]
HEIGHT_SCALE = 10.0


@dataclass
class Observation:
    """Occupancy and height grids over the workspace; ``m`` rows by ``n`` columns."""

    occupancy: np.ndarray
    height_map: np.ndarray
    bounds: Bounds
    clipped: int = 0

    def __post_init__(self) -> None:
        if self.occupancy.ndim != 2 or self.occupancy.shape != self.height_map.shape:
            raise ShapeError("occupancy and height map must be matching 2D grids")
        if min(self.occupancy.shape) < MIN_GRID:
            raise ShapeError("grid must be at least {0} x {0}".format(MIN_GRID))

    @property
    def m(self) -> int:
        return int(self.occupancy.shape[0])

    @property
    def n(self) -> int:
        return int(self.occupancy.shape[1])

    @property
    def mask(self) -> np.ndarray:
        return self.occupancy.astype(bool)

    def occupied_cells(self) -> List[GridCoord]:
        """Occupied cells in row-major order."""
        return [GridCoord(int(r), int(c)) for r, c in zip(*np.nonzero(self.occupancy))]

    def cell_center(self, coord: GridCoord) -> Tuple[float, float]:
        return self.bounds.cell_center(coord, self.m, self.n)

    def cell_of(self, x: float, y: float) -> GridCoord:
        return self.bounds.cell_of(x, y, self.m, self.n)

    def contains(self, coord: GridCoord) -> bool:
        return 0 <= coord.row < self.m and 0 <= coord.col < self.n

    def to_tensor(self) -> np.ndarray:
        """``m x n x 2`` network input: occupancy and scaled height."""
        return np.stack([self.occupancy.astype(np.float64), self.height_map * HEIGHT_SCALE], axis=-1)


def rasterize(system: ParticleSystem, bounds: Bounds, m: int, n: int, splat_radius: float) -> Observation:
    """Mark every cell whose rectangle lies within ``splat_radius`` of a particle.

    The height of a cell is the largest z among the particles that mark it.
    Particles outside the bounds are dropped and counted in ``clipped``.
    """
    pos = system.positions
    x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
    inside = (x >= bounds.xmin) & (x <= bounds.xmax) & (y >= bounds.ymin) & (y <= bounds.ymax)
    clipped = int(np.count_nonzero(~inside))
    if clipped:
        logger.warning("%d particles outside the workspace were clipped", clipped)
    x, y, z = x[inside], y[inside], z[inside]

    ch, cw = bounds.cell_size(m, n)
    cx = bounds.xmin + (np.arange(n) + 0.5) * cw
    cy = bounds.ymin + (np.arange(m) + 0.5) * ch
    dx = np.maximum(np.abs(x[:, None] - cx[None, :]) - 0.5 * cw, 0.0)
    dy = np.maximum(np.abs(y[:, None] - cy[None, :]) - 0.5 * ch, 0.0)
    hit = dy[:, :, None] ** 2 + dx[:, None, :] ** 2 <= splat_radius * splat_radius

    occupancy = hit.any(axis=0).astype(np.uint8)
    if len(z):
        height = np.where(hit, np.maximum(z, 0.0)[:, None, None], 0.0).max(axis=0)
    else:
        height = np.zeros((m, n))
    return Observation(occupancy, height * occupancy, bounds, clipped)


def coverage(obs: Observation) -> float:
    return float(np.count_nonzero(obs.occupancy)) / (obs.m * obs.n)


def state_similarity(a: Observation, b: Observation) -> float:
    """Intersection over union of two occupancy grids; 1 when both are empty."""
    if a.occupancy.shape != b.occupancy.shape:
        raise ShapeError("cannot compare {} and {} grids".format(a.occupancy.shape, b.occupancy.shape))
    ma, mb = a.mask, b.mask
    union = int(np.count_nonzero(ma | mb))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(ma & mb)) / union

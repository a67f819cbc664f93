# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Table workspace and its grid discretization.

Rows follow the y axis and columns follow the x axis; cell ``(0, 0)`` touches
``(xmin, ymin)``.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple


class GridCoord(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class Bounds:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("degenerate workspace bounds {}".format(self))

    @classmethod
    def square(cls, half_extent: float) -> "Bounds":
        return cls(-half_extent, -half_extent, half_extent, half_extent)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def clamp(self, x: float, y: float, margin: float = 0.0) -> Tuple[float, float]:
        return (
            min(max(x, self.xmin + margin), self.xmax - margin),
            min(max(y, self.ymin + margin), self.ymax - margin),
        )

    def cell_size(self, m: int, n: int) -> Tuple[float, float]:
        """(cell height along y, cell width along x)."""
        return self.height / m, self.width / n

    def cell_center(self, coord: GridCoord, m: int, n: int) -> Tuple[float, float]:
        ch, cw = self.cell_size(m, n)
        return self.xmin + (coord.col + 0.5) * cw, self.ymin + (coord.row + 0.5) * ch

    def cell_of(self, x: float, y: float, m: int, n: int) -> GridCoord:
        """Cell containing a point; points on or past the far edge map to the last cell."""
        ch, cw = self.cell_size(m, n)
        row = min(max(int(math.floor((y - self.ymin) / ch)), 0), m - 1)
        col = min(max(int(math.floor((x - self.xmin) / cw)), 0), n - 1)
        return GridCoord(row, col)

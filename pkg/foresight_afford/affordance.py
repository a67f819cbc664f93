# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Dense pick and place affordance maps, state values and the greedy policy.

The policy picks the cell with the highest pick affordance, then places it on
the cell with the highest place affordance conditioned on that pick. Ties go
to the lowest row-major index.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import EmptyObject
from .nn import PickNet, PlaceNet
from .perception import Observation
from .sim import WorldAction
from .workspace import GridCoord


@dataclass
class AffordanceMap:
    """``m x n`` scores with the cells the argmax may choose from.

    ``conditioned_on`` is ``None`` for pick maps and the pick cell for place maps.
    """

    scores: np.ndarray
    valid: np.ndarray
    conditioned_on: Optional[GridCoord] = None

    def __post_init__(self) -> None:
        if self.scores.shape != self.valid.shape:
            raise ValueError("scores and validity mask differ in shape")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("affordance scores must be finite")
        if not self.valid.any():
            raise EmptyObject("affordance map has no valid cell")

    @property
    def kind(self) -> str:
        return "pick" if self.conditioned_on is None else "place"

    def argmax(self) -> GridCoord:
        """Best valid cell; the first in row-major order among equals."""
        candidates = np.flatnonzero(self.valid)
        best = candidates[int(np.argmax(self.scores.reshape(-1)[candidates]))]
        row, col = divmod(int(best), self.scores.shape[1])
        return GridCoord(row, col)

    def max(self) -> float:
        return float(self.scores[self.valid].max())


@dataclass(frozen=True)
class ValueEstimate:
    value: float
    pick: GridCoord


def clamp_unit(x: float) -> float:
    return min(max(float(x), 0.0), 1.0)


def pick_map(pick_net: PickNet, obs: Observation) -> AffordanceMap:
    """Pick affordance of every cell, valid on the occupied cells only."""
    if not obs.occupancy.any():
        raise EmptyObject("no object in view")
    scores = pick_net.score_grid(obs.to_tensor()[None])[0]
    return AffordanceMap(scores, obs.mask.copy())


def place_map_from_features(
    place_net: PlaceNet, features: np.ndarray, global_feature: np.ndarray, pick: GridCoord
) -> AffordanceMap:
    """Place map from a precomputed backbone pass of one observation."""
    scores = place_net.place_grid(features, global_feature, pick)
    return AffordanceMap(scores, np.ones(scores.shape, dtype=bool), GridCoord(*pick))


def place_map(place_net: PlaceNet, obs: Observation, pick: GridCoord) -> AffordanceMap:
    """Place affordance of every workspace cell when ``pick`` is picked."""
    if not obs.contains(pick) or not obs.occupancy[pick[0], pick[1]]:
        raise ValueError("pick cell {} is not on the object".format(tuple(pick)))
    features, g = place_net.features(obs.to_tensor()[None])
    return place_map_from_features(place_net, features[0], g[0], pick)


def aggregate_pick_target(placing: AffordanceMap) -> float:
    """Score of the best place for the conditioning pick."""
    return placing.max()


def estimate_value(pick_net: PickNet, obs: Observation) -> ValueEstimate:
    picking = pick_map(pick_net, obs)
    return value_of(picking)


def value_of(picking: AffordanceMap) -> ValueEstimate:
    return ValueEstimate(clamp_unit(picking.max()), picking.argmax())


@dataclass
class Plan:
    """A chosen action together with the maps it was read from."""

    pick: GridCoord
    place: GridCoord
    value: float
    pick_map: AffordanceMap
    place_map: AffordanceMap
    explored: bool = False


def plan_action(
    pick_net: PickNet,
    place_net: PlaceNet,
    obs: Observation,
    exploration_eps: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    random_pick: bool = False,
) -> Plan:
    """Choose a pick then a place for ``obs``.

    With probability ``exploration_eps`` both cells are drawn uniformly from
    their valid sets instead. ``random_pick`` draws the pick uniformly from the
    object and keeps the learned place.
    """
    if not 0 <= exploration_eps <= 1:
        raise ValueError("exploration_eps must lie in [0, 1]")
    if (exploration_eps > 0 or random_pick) and rng is None:
        raise ValueError("a random generator is needed for exploration or random picks")
    picking = pick_map(pick_net, obs)
    value = value_of(picking).value

    if exploration_eps > 0 and rng is not None and rng.random() < exploration_eps:
        pick = _uniform_cell(picking.valid, rng)
        placing = place_map(place_net, obs, pick)
        return Plan(pick, _uniform_cell(placing.valid, rng), value, picking, placing, explored=True)

    if random_pick:
        assert rng is not None
        pick = _uniform_cell(picking.valid, rng)
    else:
        pick = picking.argmax()
    placing = place_map(place_net, obs, pick)
    return Plan(pick, placing.argmax(), value, picking, placing)


def select_action(
    pick_net: PickNet,
    place_net: PlaceNet,
    obs: Observation,
    exploration_eps: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[GridCoord, GridCoord]:
    plan = plan_action(pick_net, place_net, obs, exploration_eps, rng)
    return plan.pick, plan.place


def _uniform_cell(valid: np.ndarray, rng: np.random.Generator) -> GridCoord:
    candidates = np.flatnonzero(valid)
    row, col = divmod(int(candidates[int(rng.integers(len(candidates)))]), valid.shape[1])
    return GridCoord(row, col)


def to_world(obs: Observation, pick: GridCoord, place: GridCoord) -> WorldAction:
    """Table-plane action through the centres of two grid cells."""
    return WorldAction(obs.cell_center(pick), obs.cell_center(place))

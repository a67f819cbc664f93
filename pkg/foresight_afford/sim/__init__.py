# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Quasi-static particle simulation of ropes, rings and cloth on a table.
"""

from .particles import (  # noqa: F401
    Cloth,
    DistanceConstraint,
    ParticleSystem,
    Ring,
    Rope,
    Topology,
    build_cloth,
    build_ring,
    build_rope,
    decode_state,
    encode_state,
    max_constraint_violation,
)
from .solver import SettleResult, SimConfig, potential_energy, settle, step  # noqa: F401
from .actions import WorldAction, execute_pick_place, nearest_particle, perturb_drop  # noqa: F401

# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.


"""
Test the particle simulation.
"""
from unittest import TestCase

import numpy as np

from foresight_afford.errors import NoGraspableParticle
from foresight_afford.perception import rasterize, state_similarity
from foresight_afford.sim import (
    ParticleSystem,
    Rope,
    SimConfig,
    WorldAction,
    build_cloth,
    build_ring,
    build_rope,
    decode_state,
    encode_state,
    execute_pick_place,
    max_constraint_violation,
    nearest_particle,
    perturb_drop,
    potential_energy,
    settle,
    step,
)
from foresight_afford.sim.actions import _grab, _move_held, _release
from foresight_afford.workspace import Bounds

SPACING = 0.04


class TestBuilders(TestCase):
    def test_rope(self):
        rope = build_rope(8, SPACING)
        rope.check()
        self.assertEqual(rope.n_particles, 8)
        self.assertEqual(len(rope.constraints), 7)
        self.assertAlmostEqual(rope.total_length, 7 * SPACING)
        self.assertAlmostEqual(float(rope.positions[:, 0].mean()), 0.0)
        self.assertEqual(max_constraint_violation(rope), 0.0)

    def test_ring(self):
        ring = build_ring(12, SPACING)
        ring.check()
        self.assertEqual(len(ring.constraints), 12)
        self.assertLess(max_constraint_violation(ring), 1e-9)

    def test_cloth(self):
        cloth = build_cloth(5, 5, SPACING)
        cloth.check()
        self.assertEqual(cloth.n_particles, 25)
        # 2 * 5 * 4 structural + 2 * 4 * 4 shear
        self.assertEqual(len(cloth.constraints), 72)
        self.assertAlmostEqual(cloth.spacing, SPACING)
        with self.assertRaises(ValueError):
            cloth.total_length

    def test_invalid(self):
        self.assertRaises(ValueError, build_rope, 1, SPACING)
        self.assertRaises(ValueError, build_ring, 2, SPACING)
        self.assertRaises(ValueError, build_cloth, 1, 4, SPACING)
        self.assertRaises(ValueError, build_rope, 5, 0.0)


class TestSolver(TestCase):
    def setUp(self):
        self.cfg = SimConfig.for_spacing(SPACING)

    def test_config_scaling(self):
        self.assertAlmostEqual(self.cfg.grab_radius, 1.5 * SPACING)
        self.assertAlmostEqual(self.cfg.lift_height, 6 * SPACING)
        self.cfg.validate()
        self.assertRaises(ValueError, SimConfig(damping=2.0).validate)
        self.assertRaises(ValueError, SimConfig(perturb_lift_range=(0.2, 0.1)).validate)

    def test_flat_rest_is_stable(self):
        rope = build_rope(8, SPACING)
        result = settle(rope, self.cfg)
        self.assertTrue(result.converged)
        np.testing.assert_allclose(result.system.positions, rope.positions, atol=1e-9)

    def test_fall_keeps_constraints(self):
        rope = build_rope(8, SPACING)
        rope.positions[:, 2] = 0.1
        result = settle(rope, self.cfg)
        self.assertTrue(np.all(result.system.positions[:, 2] >= 0.0))
        self.assertLess(max_constraint_violation(result.system), 0.01)
        self.assertLess(result.energies[-1], result.energies[0])

    def test_held_particle_stays(self):
        rope = build_rope(8, SPACING)
        rope.positions[:, 2] = 0.1
        rope.inverse_masses[0] = 0.0
        after = step(rope, self.cfg)
        np.testing.assert_array_equal(after.positions[0], rope.positions[0])
        self.assertLess(after.positions[-1, 2], 0.1)

    def test_energy(self):
        rope = build_rope(4, SPACING)
        self.assertEqual(potential_energy(rope, self.cfg), 0.0)
        rope.positions[:, 2] = 1.0
        self.assertAlmostEqual(potential_energy(rope, self.cfg), 4 * self.cfg.gravity)

    def test_free_fall_step(self):
        point = ParticleSystem(np.array([[0.0, 0.0, 1.0]]), np.zeros((1, 3)), np.ones(1), [], Rope(1))
        after = step(point, self.cfg)
        self.assertAlmostEqual(float(after.positions[0, 2]), 1.0 - 0.5 * self.cfg.gravity * self.cfg.dt ** 2, places=12)
        np.testing.assert_array_equal(after.positions[0, :2], [0.0, 0.0])

    def test_stretched_rope_contracts(self):
        rope = build_rope(8, SPACING)
        rope.positions[:, 0] *= 2.0
        before = max_constraint_violation(rope)
        self.assertAlmostEqual(before, 1.0)
        self.assertLess(max_constraint_violation(step(rope, self.cfg)), before)

    def test_flat_cloth_is_a_fixed_point(self):
        cloth = build_cloth(5, 5, SPACING)
        result = settle(cloth, self.cfg)
        self.assertTrue(result.converged)
        self.assertLessEqual(result.steps, 2)
        np.testing.assert_allclose(result.system.positions, cloth.positions, atol=1e-9)

    def test_free_step_gains_no_energy(self):
        cloth = build_cloth(5, 5, SPACING)
        cloth.positions[:, :2] *= 1.3
        cloth.positions[:, 2] = 0.3
        current = cloth
        totals = []
        for _ in range(10):
            kinetic = 0.5 * float(np.sum(current.velocities ** 2))
            totals.append(potential_energy(current, self.cfg) + kinetic)
            current = step(current, self.cfg)
        self.assertGreater(float(np.min(current.positions[:, 2])), 0.0)
        for before, after in zip(totals, totals[1:]):
            self.assertLessEqual(after, before + 1e-9 * abs(before))

    def test_energy_never_rises_after_release(self):
        for seed in range(4):
            rng = np.random.default_rng(seed)
            cloth = settle(build_cloth(8, 8, SPACING), self.cfg).system
            index = int(rng.integers(cloth.n_particles))
            held, weight = _grab(cloth, index)
            origin = held.positions[index]
            target = np.array([origin[0] + rng.uniform(-0.1, 0.1), origin[1] + rng.uniform(-0.1, 0.1), 0.2])
            held = _move_held(held, index, target, self.cfg)
            released = _release(held, index, weight)
            np.testing.assert_array_equal(released.velocities, 0.0)
            energies = settle(released, self.cfg).energies
            self.assertGreater(len(energies), 2)
            for before, after in zip(energies, energies[1:]):
                self.assertLessEqual(after, before + 1e-6 * abs(before), "seed {}".format(seed))


class TestActions(TestCase):
    def setUp(self):
        self.cfg = SimConfig.for_spacing(SPACING)
        self.bounds = Bounds.square(0.32)

    def test_nearest_particle(self):
        rope = build_rope(4, SPACING)
        self.assertEqual(nearest_particle(rope, (rope.positions[2, 0], 0.0), 0.01), 2)
        # equidistant between 1 and 2: lowest index wins
        self.assertEqual(nearest_particle(rope, (0.0, 0.0), SPACING), 1)
        self.assertRaises(NoGraspableParticle, nearest_particle, rope, (0.3, 0.3), self.cfg.grab_radius)

    def test_pick_place_moves_end(self):
        rope = build_rope(8, SPACING)
        end = tuple(rope.positions[-1, :2])
        target = (end[0], end[1] + 0.1)
        after = execute_pick_place(rope, WorldAction(end, target), self.cfg, self.bounds)
        moved = np.hypot(after.positions[-1, 0] - target[0], after.positions[-1, 1] - target[1])
        self.assertLess(moved, 0.5 * SPACING)
        self.assertEqual(len(after.held()), 0)
        self.assertLess(max_constraint_violation(after), 0.01)

    def test_pick_nothing(self):
        rope = build_rope(8, SPACING)
        with self.assertRaises(NoGraspableParticle):
            execute_pick_place(rope, WorldAction((0.2, 0.2), (0.0, 0.0)), self.cfg, self.bounds)

    def test_pick_outside_workspace(self):
        rope = build_rope(8, SPACING)
        with self.assertRaises(ValueError):
            execute_pick_place(rope, WorldAction((0.0, 0.0), (0.5, 0.0)), self.cfg, self.bounds)

    def test_pick_and_place_at_one_point(self):
        cfg = SimConfig.for_spacing(SPACING, lift_height=0.5 * SPACING)
        cloth = settle(build_cloth(8, 8, SPACING), cfg).system
        point = tuple(cloth.positions[27, :2])
        after = execute_pick_place(cloth, WorldAction(point, point), cfg, self.bounds)
        # particles sit on cell centres of the 16 x 16 grid
        before_obs = rasterize(cloth, self.bounds, 16, 16, 0.01)
        after_obs = rasterize(after, self.bounds, 16, 16, 0.01)
        self.assertGreaterEqual(state_similarity(before_obs, after_obs), 0.9)

    def test_perturb_drop_deterministic(self):
        cloth = build_cloth(5, 5, SPACING)
        a = perturb_drop(cloth, self.cfg, 7, 2, self.bounds)
        b = perturb_drop(cloth, self.cfg, 7, 2, self.bounds)
        c = perturb_drop(cloth, self.cfg, 8, 2, self.bounds)
        np.testing.assert_array_equal(a.positions, b.positions)
        self.assertFalse(np.array_equal(a.positions, c.positions))
        self.assertEqual(len(a.held()), 0)

    def test_perturb_drop_respects_constraints(self):
        cloth = build_cloth(5, 5, SPACING)
        for seed in range(3):
            crumpled = perturb_drop(cloth, self.cfg, seed, 3, self.bounds)
            self.assertLess(max_constraint_violation(crumpled), 0.02)
            self.assertTrue(np.all(crumpled.positions[:, 2] >= 0.0))

    def test_no_drops_only_settles(self):
        rope = build_rope(8, SPACING)
        rope.positions[:, 2] = 0.1
        settled = settle(rope, self.cfg).system
        np.testing.assert_array_equal(perturb_drop(rope, self.cfg, 5, 0).positions, settled.positions)

    def test_world_action(self):
        action = WorldAction((0.0, 0.0), (0.3, 0.4))
        self.assertAlmostEqual(action.length(), 0.5)
        self.assertEqual(action.reversed(), WorldAction((0.3, 0.4), (0.0, 0.0)))


class TestStateCodec(TestCase):
    def test_exact_round_trip(self):
        cloth = build_cloth(3, 4, SPACING)
        cloth.positions[:, 2] = np.linspace(0, 0.01, cloth.n_particles)
        cloth.inverse_masses[5] = 0.0
        again = decode_state(encode_state(cloth))
        np.testing.assert_array_equal(again.positions, cloth.positions)
        np.testing.assert_array_equal(again.inverse_masses, cloth.inverse_masses)
        self.assertEqual(again.topology, cloth.topology)
        self.assertEqual(again.constraints, cloth.constraints)
        self.assertEqual(encode_state(again), encode_state(cloth))

    def test_corrupt(self):
        blob = encode_state(build_rope(4, SPACING))
        self.assertRaises(ValueError, decode_state, blob[:10])
        self.assertRaises(ValueError, decode_state, b"XXXX" + blob[4:])
        self.assertRaises(ValueError, decode_state, blob[:-3])

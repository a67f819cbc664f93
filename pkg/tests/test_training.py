# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.


"""
Test staged training, labels and integrated fine-tuning.
"""
import json
import tempfile
from dataclasses import replace
from pathlib import Path
from unittest import TestCase, mock

import numpy as np

from foresight_afford.affordance import clamp_unit, place_map
from foresight_afford.errors import MissingCheckpoint, NoGraspableParticle, TrainingDiverged
from foresight_afford.nn import PickNet, PlaceNet
from foresight_afford.training import (
    TrainConfig,
    TrainingLog,
    check_stages,
    fit,
    fresh_pick,
    fresh_place,
    ist,
    ist_stages,
    label_place_stage1,
    label_place_stage_i,
    load_pair,
    pick_targets,
    place_labels,
    run_stage_schedule,
    save_pair,
    stage_tag,
    train_only_dist,
    train_place_stage,
)

from .tiny import TINY_TRAIN, WIDTH, slow, synthetic_dataset, tiny_cloth


def staged_pick(stage, seed=0):
    net = PickNet(width=WIDTH, seed=seed)
    net.stage = stage
    return net


class TestLabels(TestCase):
    def setUp(self):
        self.first = synthetic_dataset(1, 3, seed=0).records[0]
        self.second = synthetic_dataset(2, 3, seed=1).records[0]

    def test_stage1(self):
        self.assertEqual(label_place_stage1(self.first), 1.0 - self.first.dist_after)
        self.assertRaises(ValueError, label_place_stage1, self.second)

    def test_stage_i(self):
        prev = staged_pick(1)
        self.assertEqual(label_place_stage_i(self.second, prev, 0.0, 1.0), 1.0 - self.second.dist_after)
        label = label_place_stage_i(self.second, prev)
        self.assertTrue(0.0 <= label <= 1.0)

    def test_stage_i_needs_an_earlier_pick_network(self):
        self.assertRaises(MissingCheckpoint, label_place_stage_i, self.second, None)
        self.assertRaises(ValueError, label_place_stage_i, self.second, staged_pick(2))
        self.assertRaises(ValueError, label_place_stage_i, self.first, staged_pick(0))

    def test_place_labels_use_cache(self):
        dataset = synthetic_dataset(2, 12, seed=2, distinct=3)
        prev = staged_pick(1, seed=5)
        expected = [label_place_stage_i(r, prev, 0.25, 0.75) for r in dataset.records]
        cfg = replace(TINY_TRAIN, alpha=0.25, beta=0.75)
        np.testing.assert_allclose(place_labels(dataset, prev, cfg), expected, atol=1e-12)
        only = place_labels(dataset, prev, cfg, only_dist=True)
        np.testing.assert_array_equal(only, [1.0 - r.dist_after for r in dataset.records])

    def test_pick_targets(self):
        dataset = synthetic_dataset(1, 8, seed=3, distinct=2)
        net = PlaceNet(width=WIDTH, seed=4)
        targets = pick_targets(dataset.records, net)
        for r, t in zip(dataset.records, targets):
            self.assertAlmostEqual(t, clamp_unit(place_map(net, r.obs_before, r.pick).max()), places=12)


class TestFit(TestCase):
    def setUp(self):
        self.dataset = synthetic_dataset(1, 8, seed=0)
        self.targets = np.array([1.0 - r.dist_after for r in self.dataset.records])

    def test_loss_decreases(self):
        net = fresh_place(TINY_TRAIN)
        before = fit(net.clone(), self.dataset.records, self.targets, replace(TINY_TRAIN, epochs=0), 1)
        after = fit(net, self.dataset.records, self.targets, replace(TINY_TRAIN, epochs=40, lr=3e-3), 1)
        self.assertLess(after, before)

    def test_rejects(self):
        net = fresh_place(TINY_TRAIN)
        self.assertRaises(ValueError, fit, net, [], np.zeros(0), TINY_TRAIN, 1)
        self.assertRaises(ValueError, fit, net, self.dataset.records, self.targets + 1.5, TINY_TRAIN, 1)

    def test_divergence(self):
        net = fresh_pick(TINY_TRAIN)
        with mock.patch.object(net, "all_finite", return_value=False):
            with self.assertRaises(TrainingDiverged):
                fit(net, self.dataset.records, self.targets, TINY_TRAIN, 1)

    def test_log(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "logs" / "train.jsonl"
            log = TrainingLog(path)
            fit(fresh_pick(TINY_TRAIN), self.dataset.records, self.targets, TINY_TRAIN, 1, log)
            log.close()
            entries = [json.loads(line) for line in path.read_text().splitlines()]
        # 8 records in batches of 4 for 2 epochs
        self.assertEqual(len(entries), 4)
        self.assertEqual([e["step"] for e in entries], [1, 2, 3, 4])
        self.assertEqual({e["role"] for e in entries}, {"pick"})
        self.assertEqual(log.step, 4)


class TestSchedule(TestCase):
    def setUp(self):
        self.datasets = [synthetic_dataset(1, 8, seed=0), synthetic_dataset(2, 8, seed=1)]

    def test_deterministic(self):
        one = run_stage_schedule(self.datasets, TINY_TRAIN)
        two = run_stage_schedule(list(reversed(self.datasets)), TINY_TRAIN)
        self.assertEqual(one.stages, [1, 2])
        for stage in one.stages:
            for a, b in zip(one.pair(stage), two.pair(stage)):
                self.assertEqual(a.checksum(), b.checksum())
                self.assertEqual(a.stage, stage)
        self.assertEqual(len(one.reports), 4)
        self.assertEqual(one.picks[2].lineage["tag"], "stage2")
        self.assertEqual(one.places[2].lineage["sources"], [one.picks[1].checksum()])

    def test_warm_start(self):
        warm = run_stage_schedule(self.datasets, TINY_TRAIN)
        cold = run_stage_schedule(self.datasets, replace(TINY_TRAIN, warm_start=False))
        from_previous, _ = train_place_stage(self.datasets[1], warm.picks[1], TINY_TRAIN, init=warm.places[1])
        from_scratch, _ = train_place_stage(self.datasets[1], cold.picks[1], TINY_TRAIN)
        self.assertEqual(warm.places[2].checksum(), from_previous.checksum())
        self.assertEqual(cold.places[2].checksum(), from_scratch.checksum())
        self.assertNotEqual(warm.places[2].checksum(), cold.places[2].checksum())

    def test_missing_stage(self):
        self.assertRaises(MissingCheckpoint, check_stages, [self.datasets[1]])
        self.assertRaises(MissingCheckpoint, run_stage_schedule, [], TINY_TRAIN)
        self.assertRaises(MissingCheckpoint, train_place_stage, self.datasets[1], None, TINY_TRAIN)
        self.assertRaises(ValueError, run_stage_schedule, self.datasets, replace(TINY_TRAIN, alpha=0.7))

    def test_only_dist(self):
        pick, place, reports = train_only_dist(self.datasets, TINY_TRAIN)
        self.assertEqual((pick.stage, place.stage), (0, 0))
        self.assertEqual(pick.lineage["tag"], "only_dist")
        self.assertEqual([r.records for r in reports], [16, 16])

    def test_checkpoint_pair(self):
        models = run_stage_schedule(self.datasets[:1], replace(TINY_TRAIN, epochs=0))
        with tempfile.TemporaryDirectory() as tmp:
            ids = save_pair(*models.pair(1), tmp, stage_tag(1))
            pick, place = load_pair(tmp, "stage1")
            self.assertRaises(MissingCheckpoint, load_pair, tmp, "stage2")
        self.assertEqual(sorted(ids), ["stage1_pick.ckpt", "stage1_place.ckpt"])
        self.assertEqual(ids["stage1_pick.ckpt"], pick.checksum())
        self.assertEqual(place.lineage, models.places[1].lineage)


class TestIntegratedTraining(TestCase):
    def test_ist_tags_copies(self):
        pick, place = fresh_pick(TINY_TRAIN), fresh_place(TINY_TRAIN)
        pick.stage = place.stage = 2
        before = (pick.checksum(), place.checksum())
        result = ist(pick, place, tiny_cloth(), TINY_TRAIN, num_drops=1)
        self.assertEqual((pick.checksum(), place.checksum()), before)
        self.assertEqual(result.pick.lineage["tag"], "ist_stage2")
        self.assertEqual(result.place.lineage["sources"], list(before))
        self.assertEqual(result.pick.stage, 2)
        self.assertLessEqual(len(result.episodes), TINY_TRAIN.ist_episodes * TINY_TRAIN.ist_max_actions)
        for episode in result.episodes:
            if "skipped" not in episode:
                self.assertTrue(0.0 <= episode["pick_target"] <= 1.0)

    def test_no_episodes_is_identity(self):
        pick, place = fresh_pick(TINY_TRAIN), fresh_place(TINY_TRAIN)
        result = ist(pick, place, tiny_cloth(), replace(TINY_TRAIN, ist_episodes=0))
        self.assertEqual(result.pick.checksum(), pick.checksum())
        self.assertEqual(result.episodes, [])

    def test_failed_action_ends_episode(self):
        pick, place = fresh_pick(TINY_TRAIN), fresh_place(TINY_TRAIN)
        cfg = replace(TINY_TRAIN, ist_episodes=2, ist_max_actions=5, exploration_eps=0.0)
        failing = mock.patch("foresight_afford.training.execute_pick_place", side_effect=NoGraspableParticle("empty"))
        with failing as executed:
            result = ist(pick, place, tiny_cloth(), cfg, num_drops=1)
        self.assertEqual(executed.call_count, 2)
        self.assertEqual([(e["episode"], e["step"]) for e in result.episodes], [(0, 0), (1, 0)])
        self.assertTrue(all("skipped" in e for e in result.episodes))
        self.assertEqual(result.pick.checksum(), pick.checksum())

    def test_stages_tuned_by_default(self):
        models = run_stage_schedule([synthetic_dataset(1, 4, seed=0), synthetic_dataset(2, 4, seed=1)], TINY_TRAIN)
        cfg = replace(TINY_TRAIN, ist_max_actions=1)
        self.assertTrue(cfg.ist_all_stages and cfg.only_dist)
        tuned, episodes = ist_stages(models, tiny_cloth(), cfg, num_drops=1)
        self.assertEqual(tuned.stages, [1, 2])
        self.assertEqual(tuned.picks[1].lineage["tag"], "ist_stage1")
        self.assertEqual({e["stage"] for e in episodes}, {1, 2})
        final, _ = ist_stages(models, tiny_cloth(), replace(cfg, ist_all_stages=False), num_drops=1)
        self.assertEqual(final.stages, [2])


class TestOverfit(TestCase):
    @slow
    def test_overfits_small_dataset(self):
        dataset = synthetic_dataset(1, 50, seed=7)
        targets = np.array([1.0 - r.dist_after for r in dataset.records])
        cfg = TrainConfig(width=0.125, batch_size=10, epochs=400, lr=1e-3)
        self.assertLess(fit(fresh_place(cfg), dataset.records, targets, cfg, 1), 0.05)

# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.


"""
Test the numpy network engine.
"""
import hashlib
import struct
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np

from foresight_afford.errors import CheckpointFormatError, MissingCheckpoint, ShapeError
from foresight_afford.nn import (
    AdamState,
    Conv2d,
    FcnBackbone,
    Linear,
    PickNet,
    PlaceNet,
    adam_step,
    channel_schedule,
    decode_checkpoint,
    encode_checkpoint,
    format_report,
    load_checkpoint,
    mae_grad,
    mae_loss,
    run_suite,
    save_checkpoint,
)
from foresight_afford.nn.gradcheck import check_layer, relative_error

WIDTH = 1 / 16


class SkewedLinear(Linear):
    def backward(self, dy):
        dx = super().backward(dy)
        self.grad_weight *= 1.1
        return dx


class TestGradcheck(TestCase):
    def test_every_layer_passes(self):
        results = run_suite(0)
        self.assertEqual(len(results), 7)
        for r in results:
            self.assertTrue(r.passed, format_report(results))
            self.assertGreater(r.checked, 0)
        self.assertNotIn("FAIL", format_report(results))

    def test_corrupted_gradient_is_caught(self):
        rng = np.random.default_rng(3)
        result = check_layer("skewed", SkewedLinear(5, 3, rng), [rng.standard_normal((4, 5))], rng)
        self.assertFalse(result.passed)
        self.assertIn("FAIL", format_report([result]))

    def test_strided_conv_shape(self):
        conv = Conv2d(2, 3, 2)
        self.assertEqual(conv.forward(np.zeros((1, 8, 6, 2))).shape, (1, 4, 3, 3))
        self.assertEqual(conv.backward(np.zeros((1, 4, 3, 3))).shape, (1, 8, 6, 2))
        self.assertRaises(ShapeError, conv.forward, np.zeros((1, 8, 6, 3)))
        self.assertRaises(ValueError, Conv2d, 2, 3, 3)

    def test_relative_error(self):
        self.assertEqual(relative_error(1.0, 1.0), 0.0)
        self.assertAlmostEqual(relative_error(1.0, 1.1), 0.1 / 1.1)
        self.assertEqual(relative_error(0.0, 0.0), 0.0)


class TestLoss(TestCase):
    def test_mae(self):
        self.assertAlmostEqual(mae_loss(np.array([1.0, 2.0]), np.array([0.0, 4.0])), 1.5)
        np.testing.assert_array_equal(mae_grad(np.array([1.0, 2.0, 3.0]), np.array([0.0, 4.0, 3.0])), [0.5, -0.5, 0.0])

    def test_shapes(self):
        self.assertRaises(ShapeError, mae_loss, np.zeros(3), np.zeros(4))
        self.assertRaises(ShapeError, mae_grad, np.zeros(0), np.zeros(0))


class TestAdam(TestCase):
    def test_first_step_is_sign(self):
        params = {"w": np.array([1.0, -2.0, 0.5])}
        grads = {"w": np.array([0.3, -4.0, 0.0])}
        state = AdamState(lr=0.01)
        adam_step(params, grads, state)
        np.testing.assert_allclose(params["w"], [0.99, -1.99, 0.5], atol=1e-8)
        self.assertEqual(state.step, 1)

    def test_converges_on_quadratic(self):
        params = {"w": np.array([0.0])}
        state = AdamState(lr=0.05)
        for _ in range(2000):
            adam_step(params, {"w": 2.0 * (params["w"] - 3.0)}, state)
        self.assertAlmostEqual(float(params["w"][0]), 3.0, places=2)

    def test_deterministic(self):
        finals = []
        for _ in range(2):
            params = {"w": np.linspace(-1, 1, 5)}
            state = AdamState(lr=0.1)
            for k in range(10):
                adam_step(params, {"w": np.sin(params["w"] + k)}, state)
            finals.append(params["w"].copy())
        np.testing.assert_array_equal(finals[0], finals[1])

    def test_shape_mismatch(self):
        self.assertRaises(ShapeError, adam_step, {"w": np.zeros(3)}, {"w": np.zeros(4)}, AdamState())
        self.assertRaises(ShapeError, adam_step, {"w": np.zeros(3)}, {"v": np.zeros(3)}, AdamState())
        self.assertRaises(ValueError, AdamState(lr=0.0).validate)


class TestModel(TestCase):
    def setUp(self):
        self.x = np.random.default_rng(0).uniform(0, 1, (2, 16, 16, 2))

    def test_channel_schedule(self):
        self.assertEqual(channel_schedule(0.25), (16, 16, 32, 64, 128, 128, 128, 64, 64, 32, 32, 64, 64, 64))
        self.assertEqual(channel_schedule(1.0)[13], 256)
        self.assertRaises(ValueError, channel_schedule, 0.0)
        self.assertRaises(ValueError, channel_schedule, 1.5)

    def test_backbone_shapes(self):
        backbone = FcnBackbone(2, WIDTH)
        features, g = backbone.forward(self.x)
        self.assertEqual(features.shape, (2, 16, 16, 16))
        self.assertEqual(g.shape, (2, 32))
        self.assertRaises(ShapeError, backbone.forward, np.zeros((1, 12, 16, 2)))
        self.assertRaises(ShapeError, backbone.forward, np.zeros((1, 16, 16, 3)))

    def test_pick_cells_match_grid(self):
        net = PickNet(width=WIDTH, seed=1)
        grid = net.score_grid(self.x)
        self.assertEqual(grid.shape, (2, 16, 16))
        cells = np.array([[3, 4], [15, 0]])
        np.testing.assert_allclose(net.scores_at(self.x, cells), [grid[0, 3, 4], grid[1, 15, 0]], atol=1e-12)

    def test_place_cells_match_grid(self):
        net = PlaceNet(width=WIDTH, seed=2)
        features, g = net.features(self.x)
        picks = np.array([[2, 2], [7, 9]])
        places = np.array([[5, 11], [7, 9]])
        scores = net.scores_at(self.x, picks, places)
        for k in range(2):
            grid = net.place_grid(features[k], g[k], tuple(picks[k]))
            self.assertAlmostEqual(scores[k], grid[tuple(places[k])], places=12)
        np.testing.assert_allclose(net.score_grid(self.x[0], (2, 2)), net.place_grid(features[0], g[0], (2, 2)))

    def _finite_difference(self, net, score, backward):
        rng = np.random.default_rng(5)
        coeffs = rng.standard_normal(2)
        net.zero_grad()
        score()
        backward(coeffs)
        params = net.parameters()
        grads = net.gradients()
        eps = 1e-6
        for name in ("backbone.enc0.weight", "backbone.down4.bias", "backbone.up0b.weight", "head.fc1.weight"):
            flat = params[name].reshape(-1)
            analytic = grads[name].reshape(-1)
            for index in rng.choice(flat.size, size=3, replace=False):
                original = flat[index]
                flat[index] = original + eps
                plus = float(np.dot(score(), coeffs))
                flat[index] = original - eps
                minus = float(np.dot(score(), coeffs))
                flat[index] = original
                numeric = (plus - minus) / (2 * eps)
                a = float(analytic[index])
                self.assertLess(abs(a - numeric), 1e-3 * max(abs(a), abs(numeric)) + 1e-7, name)

    def test_pick_backward(self):
        net = PickNet(width=WIDTH, seed=3)
        cells = np.array([[1, 1], [8, 12]])
        self._finite_difference(net, lambda: net.scores_at(self.x, cells), net.backward)

    def test_place_backward_with_pick_equal_place(self):
        net = PlaceNet(width=WIDTH, seed=4)
        picks = np.array([[4, 4], [10, 3]])
        places = np.array([[4, 4], [0, 15]])
        self._finite_difference(net, lambda: net.scores_at(self.x, picks, places), net.backward)

    def test_clone_is_independent(self):
        net = PickNet(width=WIDTH)
        other = net.clone()
        self.assertEqual(net.checksum(), other.checksum())
        other.parameters()["head.fc2.bias"][0] += 1.0
        self.assertNotEqual(net.checksum(), other.checksum())
        self.assertTrue(net.all_finite())
        other.parameters()["head.fc2.bias"][0] = np.nan
        self.assertFalse(other.all_finite())

    def test_seeded_init(self):
        self.assertEqual(PickNet(width=WIDTH, seed=7).checksum(), PickNet(width=WIDTH, seed=7).checksum())
        self.assertNotEqual(PickNet(width=WIDTH, seed=7).checksum(), PickNet(width=WIDTH, seed=8).checksum())


class TestCheckpoint(TestCase):
    def setUp(self):
        self.net = PlaceNet(width=WIDTH, seed=9)
        self.net.stage = 3
        self.net.lineage = {"role": "place", "tag": "stage3", "sources": ["abc"]}

    def test_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "stage3_place.ckpt"
            checksum = save_checkpoint(self.net, path)
            loaded = load_checkpoint(path)
        self.assertIsInstance(loaded, PlaceNet)
        self.assertEqual(loaded.checksum(), checksum)
        self.assertEqual(loaded.stage, 3)
        self.assertEqual(loaded.lineage, self.net.lineage)
        self.assertEqual(encode_checkpoint(loaded), encode_checkpoint(self.net))
        for name, value in self.net.parameters().items():
            np.testing.assert_array_equal(loaded.parameters()[name], value.astype(np.float32))

    def test_corruption(self):
        data = bytearray(encode_checkpoint(self.net))
        data[len(data) // 2] ^= 0xFF
        self.assertRaises(CheckpointFormatError, decode_checkpoint, bytes(data))
        self.assertRaises(CheckpointFormatError, decode_checkpoint, encode_checkpoint(self.net)[:20])

    def test_version(self):
        body = bytearray(encode_checkpoint(self.net)[:-32])
        body[4:6] = struct.pack("<H", 2)
        with self.assertRaisesRegex(CheckpointFormatError, "version"):
            decode_checkpoint(bytes(body) + hashlib.sha256(body).digest())

    def test_missing(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.assertRaises(MissingCheckpoint, load_checkpoint, Path(tmp) / "nothing.ckpt")

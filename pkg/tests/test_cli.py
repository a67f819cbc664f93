# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.


"""
Test the command-line entry point and its exit codes.
"""
import io
import json
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest import TestCase

from foresight_afford.cli import main
from foresight_afford.data import dataset_filename, save_dataset
from foresight_afford.render import read_ppm

from .tiny import slow, synthetic_dataset

TINY_RUN = {
    "task": "SpreadCloth",
    "task_params": {"rows": 5, "cols": 5, "spacing": 0.04},
    "grid": 16,
    "collection": {
        "records_per_stage": 4,
        "actions_per_state": 2,
        "num_stages": 2,
        "starts_per_stage": 2,
        "max_expansion_attempts": 20,
        "similarity_threshold": 0.6,
        "acceptance_floor": 0.0,
    },
    "train": {"width": 0.0625, "batch_size": 4, "epochs": 1, "ist_episodes": 1, "ist_max_actions": 1},
    "eval": {"n_seeds": 2, "max_actions": 1, "num_drops": 1},
}


class CliCase(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        self.out = self.root / "run"
        self.config = self.root / "run.json"
        self.config.write_text(json.dumps(TINY_RUN))

    def tearDown(self):
        self._tmp.cleanup()

    def run_cli(self, *argv):
        stdout, stderr = io.StringIO(), io.StringIO()
        args = list(argv) + ["--config", str(self.config), "--out", str(self.out)]
        with redirect_stdout(stdout), redirect_stderr(stderr):
            code = main(args)
        self.stderr = stderr.getvalue()
        return code

    def manifest(self, command):
        return json.loads((self.out / "manifest_{}.json".format(command)).read_text())


class TestExitCodes(CliCase):
    def test_gradcheck(self):
        self.assertEqual(self.run_cli("gradcheck", "--seed", "4"), 0)
        self.assertNotIn("FAIL", (self.out / "gradcheck.txt").read_text())
        manifest = self.manifest("gradcheck")
        self.assertEqual(manifest["seed"], 4)
        self.assertEqual(list(manifest["outputs"]), [str(self.out / "gradcheck.txt")])

    def test_bad_config(self):
        self.config.write_text(json.dumps(dict(TINY_RUN, grid=40)))
        self.assertEqual(self.run_cli("train"), 1)
        self.assertIn("grid", self.stderr)
        self.config.write_text("{")
        self.assertEqual(self.run_cli("train"), 1)
        self.assertEqual(self.run_cli("train", "--threads", "0"), 1)

    def test_bad_arguments(self):
        with redirect_stderr(io.StringIO()):
            self.assertEqual(main(["nonsense"]), 1)
            self.assertEqual(main(["eval", "--variant", "Greedy"]), 1)
        self.assertEqual(self.run_cli("render"), 1)

    def test_missing_inputs(self):
        self.assertEqual(self.run_cli("train"), 2)
        self.assertIn("run collect first", self.stderr)
        self.assertEqual(self.run_cli("eval"), 2)
        self.assertEqual(self.run_cli("ist"), 2)
        self.assertFalse((self.out / "manifest_train.json").exists())

    def test_malformed_episode_log(self):
        log = self.root / "episodes.jsonl"
        log.write_text('{"variant": "Full", "state": "AAAA"}\n')
        self.assertEqual(self.run_cli("render", "--episode-log", str(log)), 2)
        self.assertIn("render failed", self.stderr)
        self.assertIn("line 1", self.stderr)
        self.assertNotIn("Traceback", self.stderr)
        self.assertFalse((self.out / "manifest_render.json").exists())


class TestSyntheticRun(CliCase):
    def test_train_eval_render(self):
        for stage in (1, 2):
            save_dataset(synthetic_dataset(stage, 6, seed=stage), self.out / "datasets" / dataset_filename(stage))
        self.assertEqual(self.run_cli("train"), 0)
        checkpoints = self.out / "checkpoints"
        self.assertEqual(
            sorted(p.name for p in checkpoints.iterdir()),
            [
                "only_dist_pick.ckpt",
                "only_dist_place.ckpt",
                "stage1_pick.ckpt",
                "stage1_place.ckpt",
                "stage2_pick.ckpt",
                "stage2_place.ckpt",
            ],
        )
        self.assertEqual(len(json.loads((self.out / "train_report.json").read_text())["reports"]), 6)
        self.assertEqual(len(self.manifest("train")["inputs"]), 2)

        self.assertEqual(self.run_cli("eval", "--variant", "NoIST"), 0)
        report = json.loads((self.out / "eval_report.json").read_text())
        self.assertEqual((report["stage"], report["checkpoints"], report["n"]), (2, "stage2", 2))

        dataset = self.out / "datasets" / "stage1.fads"
        code = self.run_cli("render", "--state", str(dataset), "--record", "2", "--checkpoints", str(checkpoints))
        self.assertEqual(code, 0)
        for name in ("observation.ppm", "pick_map.ppm", "place_map.ppm"):
            self.assertEqual(read_ppm(self.out / "render" / name).shape, (512, 512, 3))
        self.assertEqual(self.run_cli("render", "--state", str(dataset), "--record", "99"), 1)

        log = self.out / "eval_episodes.jsonl"
        self.assertEqual(self.run_cli("render", "--episode-log", str(log)), 0)
        self.assertTrue((self.out / "render" / "episode_NoIST_1000_initial.ppm").exists())

        self.assertEqual(self.run_cli("eval", "--variant", "OnlyDist"), 0)
        self.assertEqual(json.loads((self.out / "eval_report.json").read_text())["checkpoints"], "only_dist")

    def test_default_ablation_is_complete(self):
        for stage in (1, 2):
            save_dataset(synthetic_dataset(stage, 6, seed=stage), self.out / "datasets" / dataset_filename(stage))
        for command in ("train", "ist", "ablate"):
            self.assertEqual(self.run_cli(command), 0, self.stderr)
        checkpoints = {p.name for p in (self.out / "checkpoints").iterdir()}
        for tag in ("stage1", "stage2", "ist_stage1", "ist_stage2", "only_dist"):
            self.assertIn("{}_pick.ckpt".format(tag), checkpoints)
        ablation = json.loads((self.out / "ablation.json").read_text())
        self.assertEqual(ablation["gaps"], [])
        for variant in ("Full", "OnlyDist", "RandPick", "NoIST"):
            for stage in ("stage1", "stage2"):
                self.assertIsNotNone(ablation["matrix"][variant][stage])


class TestEndToEnd(CliCase):
    @slow
    def test_full_pipeline(self):
        for command in ("collect", "train", "ist", "eval", "ablate"):
            self.assertEqual(self.run_cli(command, "--seed", "3"), 0, self.stderr)
            self.assertEqual(self.manifest(command)["seed"], 3)
        self.assertTrue((self.out / "checkpoints" / "ist_stage2_pick.ckpt").exists())
        self.assertEqual(json.loads((self.out / "eval_report.json").read_text())["checkpoints"], "ist_stage2")
        ablation = json.loads((self.out / "ablation.json").read_text())
        self.assertEqual(ablation["gaps"], [])
        self.assertIsNotNone(ablation["matrix"]["NoIST"]["stage1"])
        self.assertIsNotNone(ablation["matrix"]["Full"]["stage2"])

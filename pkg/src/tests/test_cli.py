import json
import os
import struct
import tempfile
import unittest

from src.core.synth import random_scene_spec, save_scene_spec
from src.main import main
from src.utils.fs import calculate_dir_hash

SMALL = {
    "runs": 2,
    "seeds": [0, 1],
    "families": ["GB"],
    "tasks": ["regress"],
    "n_c_list": [0, 1],
    "baselines": False,
    "min_interior": 50,
    "boosting": {"n_trees": 10},
    "synth": {"sequences": 3, "height": 40, "width": 60, "classes": 3, "frames": 10, "blobs": [2, 3]},
}


def write_config(td):
    path = os.path.join(td, "pipeline_config.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write("// small end-to-end run\n")
        json.dump(SMALL, f)
    return path


def run_all(config, out):
    codes = []
    for command in ("synth", "track", "dataset", "train-eval", "render"):
        codes.append(main(["--config", config, "--out", out, "--quiet", command]))
    return codes


class TestCliErrors(unittest.TestCase):
    def test_missing_tensor_dir(self):
        with tempfile.TemporaryDirectory() as td:
            code = main(["--out", td, "--quiet", "track", "--tensors", os.path.join(td, "absent")])
        self.assertEqual(code, 3)

    def test_malformed_tensor(self):
        with tempfile.TemporaryDirectory() as td:
            seq = os.path.join(td, "tensors", "a")
            os.makedirs(seq)
            with open(os.path.join(seq, "0000.sqtf"), "wb") as f:
                f.write(struct.pack("<4sBBBB", b"NOPE", 1, 0, 3, 0))
            code = main(["--out", os.path.join(td, "out"), "--quiet", "track", "--tensors", os.path.join(td, "tensors")])
        self.assertEqual(code, 2)

    def test_unknown_config_key(self):
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "cfg.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"colour": 1}, f)
            self.assertEqual(main(["--config", path, "--out", td, "--quiet", "synth"]), 2)

    def test_train_without_dataset(self):
        with tempfile.TemporaryDirectory() as td:
            self.assertEqual(main(["--out", td, "--quiet", "train-eval"]), 3)


class TestCliScene(unittest.TestCase):
    def test_scene_file(self):
        spec = random_scene_spec(7, height=40, width=60, num_classes=3, frames=5)
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "street.json")
            save_scene_spec(spec, path)
            out = os.path.join(td, "out")
            self.assertEqual(main(["--out", out, "--quiet", "synth", "--scene", path]), 0)
            self.assertEqual(os.listdir(os.path.join(out, "synth", "tensors")), ["street"])
            self.assertEqual(len(os.listdir(os.path.join(out, "synth", "tensors", "street"))), 5)
            with open(os.path.join(out, "effective_config.json"), encoding="utf-8") as f:
                self.assertEqual(json.load(f)["synth"]["scene"], path)

    def test_scene_directory(self):
        with tempfile.TemporaryDirectory() as td:
            scenes = os.path.join(td, "scenes")
            for seed, name in ((1, "a"), (2, "b")):
                save_scene_spec(random_scene_spec(seed, height=40, width=60, frames=3), os.path.join(scenes, f"{name}.json"))
            out = os.path.join(td, "out")
            self.assertEqual(main(["--out", out, "--quiet", "synth", "--scene", scenes]), 0)
            self.assertEqual(sorted(os.listdir(os.path.join(out, "synth", "tensors"))), ["a", "b"])

    def test_scene_with_unknown_field(self):
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "bad.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"height": 8, "width": 8, "num_classes": 2, "frames": 1, "colour": "red"}, f)
            self.assertEqual(main(["--out", td, "--quiet", "synth", "--scene", path]), 2)


class TestCliEndToEnd(unittest.TestCase):
    def test_full_pipeline_is_deterministic(self):
        with tempfile.TemporaryDirectory() as td:
            config = write_config(td)
            out_a, out_b = os.path.join(td, "a"), os.path.join(td, "b")
            self.assertEqual(run_all(config, out_a), [0] * 5)
            self.assertEqual(run_all(config, out_b), [0] * 5)

            for sub in ("synth", "tracks", "models", "render"):
                self.assertEqual(
                    calculate_dir_hash(os.path.join(out_a, sub)),
                    calculate_dir_hash(os.path.join(out_b, sub)),
                    sub,
                )
            for name in ("dataset.csv", "report.json", "report.csv"):
                with open(os.path.join(out_a, name), "rb") as fa, open(os.path.join(out_b, name), "rb") as fb:
                    self.assertEqual(fa.read(), fb.read(), name)

            with open(os.path.join(out_a, "report.json"), encoding="utf-8") as f:
                report = json.load(f)
            self.assertEqual(len(report["reports"]), 2)
            self.assertTrue(all(len(r["runs"]) == 2 for r in report["reports"]))

            with open(os.path.join(out_a, "tracks", "tracks_summary.json"), encoding="utf-8") as f:
                summary = json.load(f)
            self.assertEqual(sorted(summary["sequences"]), ["seq000", "seq001", "seq002"])
            for stats in summary["sequences"].values():
                self.assertIn("id_consistency", stats)

            frames = sorted(os.listdir(os.path.join(out_a, "render", "seq000")))
            self.assertEqual(len(frames), 10)
            with open(os.path.join(out_a, "render", "seq000", frames[0]), "rb") as f:
                self.assertTrue(f.read().startswith(b"P6\n"))
            self.assertTrue(os.path.exists(os.path.join(out_a, "effective_config.json")))


if __name__ == "__main__":
    unittest.main()

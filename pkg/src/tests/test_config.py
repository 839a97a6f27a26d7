import json
import os
import tempfile
import unittest
from unittest.mock import patch

import src.config as config_mod
from src.core.errors import ConfigError


class TestPipelineConfig(unittest.TestCase):
    def test_missing_default_file_keeps_defaults(self):
        with tempfile.TemporaryDirectory() as td:
            with patch.object(config_mod, "DEFAULT_CONFIG_FILE", os.path.join(td, "none.json")):
                cfg = config_mod.PipelineConfig().load()
        self.assertEqual(cfg.runs, 10)
        self.assertEqual(cfg.n_c_list, list(range(11)))
        self.assertEqual(cfg.tracker["c_over"], 0.35)

    def test_load_with_comments_merges_nested(self):
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "cfg.json")
            with open(path, "w", encoding="utf-8") as f:
                f.write('{\n  // fewer runs\n  "runs": 2,\n  "seeds": [5, 6],\n  "tracker": {"c_near": 4}\n}\n')
            cfg = config_mod.PipelineConfig().load(path)
        self.assertEqual(cfg.runs, 2)
        self.assertEqual(cfg.tracker["c_near"], 4)
        self.assertEqual(cfg.tracker["c_dist"], 100.0)
        self.assertEqual(cfg.tracker_config().c_near, 4)

    def test_unknown_keys(self):
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "cfg.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"rusn": 2}, f)
            with self.assertRaises(ConfigError):
                config_mod.PipelineConfig().load(path)
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"tracker": {"c_far": 2}}, f)
            with self.assertRaises(ConfigError):
                config_mod.PipelineConfig().load(path)

    def test_explicit_missing_file(self):
        with tempfile.TemporaryDirectory() as td:
            with self.assertRaises(Exception) as ctx:
                config_mod.PipelineConfig().load(os.path.join(td, "nope.json"))
            self.assertEqual(ctx.exception.exit_code, 3)

    def test_overrides_skip_none(self):
        cfg = config_mod.PipelineConfig().apply_overrides(seed=7, out_dir=None)
        self.assertEqual(cfg.seed, 7)
        self.assertEqual(cfg.out_dir, config_mod.DEFAULT_OUTPUT_DIR)

    def test_thread_precedence(self):
        cfg = config_mod.PipelineConfig()
        with patch.dict(os.environ, {}, clear=True):
            self.assertEqual(cfg.resolve_threads(), 1)
        with patch.dict(os.environ, {config_mod.THREADS_ENV: "4"}):
            self.assertEqual(cfg.resolve_threads(), 4)
            cfg.threads = 2
            self.assertEqual(cfg.resolve_threads(), 2)
        with patch.dict(os.environ, {config_mod.THREADS_ENV: "zero"}):
            cfg.threads = None
            with self.assertRaises(ConfigError):
                cfg.resolve_threads()

    def test_experiment_config(self):
        cfg = config_mod.PipelineConfig().apply_overrides(runs=3, seeds=[1, 2, 3], families=["GB"], threads=1)
        exp = cfg.experiment_config()
        self.assertEqual(exp.runs, 3)
        self.assertEqual(exp.seeds, (1, 2, 3))
        self.assertEqual(exp.hyper["boosting"].n_trees, 100)
        cfg.runs = 20
        with self.assertRaises(ConfigError):
            cfg.experiment_config()
        cfg.runs = 3
        cfg.boosting = dict(cfg.boosting, depth=2)
        with self.assertRaises(ConfigError):
            cfg.experiment_config()

    def test_save_effective_config(self):
        with tempfile.TemporaryDirectory() as td:
            cfg = config_mod.PipelineConfig().apply_overrides(out_dir=td)
            cfg.save()
            with open(os.path.join(td, "effective_config.json"), encoding="utf-8") as f:
                saved = json.load(f)
        self.assertEqual(saved["out_dir"], td)
        self.assertEqual(saved["smoter"], {"bins": 10, "k": 5, "ratio": 1.0})


if __name__ == "__main__":
    unittest.main()

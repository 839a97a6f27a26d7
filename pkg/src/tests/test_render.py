import os
import tempfile
import unittest

import numpy as np

from src.core.errors import MissingValue, ValidationError
from src.core.evaluation import RunReport
from src.core.plots import plot_lifetime_vs_size, plot_nc_curves, plot_pred_vs_true
from src.core.render import (
    encode_ppm,
    quality_color,
    read_ppm,
    render_labels,
    render_panel,
    render_quality,
    write_ppm,
)
from src.core.segmentation import build_segment_frame


def two_segments():
    labels = np.zeros((4, 6), dtype=np.int32)
    labels[:, 3:] = 1
    return build_segment_frame(labels)


class TestColors(unittest.TestCase):
    def test_ramp(self):
        self.assertEqual(quality_color(1.0), (0, 255, 0))
        self.assertEqual(quality_color(0.0), (255, 0, 0))
        self.assertEqual(quality_color(0.5), (128, 128, 0))
        self.assertEqual(quality_color(None), (255, 255, 255))


class TestRenderQuality(unittest.TestCase):
    def test_fill_and_boundary(self):
        sf = build_segment_frame(np.zeros((3, 3), dtype=np.int32))
        img = render_quality(sf, {1: 1.0})
        self.assertEqual(img.shape, (3, 3, 3))
        self.assertTrue(np.all(img == (0, 255, 0)))

        sf = two_segments()
        img = render_quality(sf, {1: 0.5, 2: None})
        self.assertEqual(tuple(img[0, 0]), (128, 128, 0))
        self.assertEqual(tuple(img[0, 5]), (255, 255, 255))
        # the column left of the class change is drawn black
        self.assertTrue(np.all(img[:, 2] == 0))

    def test_missing_value(self):
        with self.assertRaises(MissingValue):
            render_quality(two_segments(), {1: 0.3})

    def test_pure_function(self):
        sf = two_segments()
        a = encode_ppm(render_quality(sf, {1: 0.2, 2: 0.9}))
        b = encode_ppm(render_quality(sf, {1: 0.2, 2: 0.9}))
        self.assertEqual(a, b)

    def test_panel(self):
        sf = two_segments()
        panel = render_panel([render_labels(sf), render_quality(sf, {1: 1.0, 2: 0.0})], gap=2)
        self.assertEqual(panel.shape, (4, 14, 3))
        self.assertTrue(np.all(panel[:, 6:8] == 255))
        with self.assertRaises(ValidationError):
            render_panel([np.zeros((2, 2, 3), np.uint8), np.zeros((3, 2, 3), np.uint8)])


class TestPpm(unittest.TestCase):
    def test_single_green_pixel(self):
        raw = encode_ppm(np.array([[[0, 255, 0]]], dtype=np.uint8))
        self.assertEqual(raw, b"P6\n1 1\n255\n\x00\xff\x00")

    def test_read_back(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=(7, 5, 3)).astype(np.uint8)
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "sub", "x.ppm")
            write_ppm(img, path)
            with open(path, "rb") as f:
                raw = f.read()
            np.testing.assert_array_equal(read_ppm(path), img)
        header = b"P6\n5 7\n255\n"
        self.assertTrue(raw.startswith(header))
        self.assertEqual(raw[len(header) :], img.tobytes())

    def test_zero_dimension(self):
        with self.assertRaises(ValidationError):
            encode_ppm(np.zeros((0, 4, 3), dtype=np.uint8))


class TestPlots(unittest.TestCase):
    def test_figures_are_written(self):
        reports = []
        for n_c in range(3):
            r = RunReport("GB", "regress", n_c, "R")
            r.runs = [{"r2": 0.5 + 0.1 * n_c, "sigma": 0.1}, {"r2": 0.6 + 0.1 * n_c, "sigma": 0.1}]
            reports.append(r)
        rng = np.random.default_rng(1)
        with tempfile.TemporaryDirectory() as td:
            paths = [os.path.join(td, name) for name in ("nc.png", "pred.png", "life.png")]
            plot_nc_curves(reports, paths[0], "regress")
            plot_pred_vs_true(rng.random(30), rng.random(30), rng.integers(10, 500, 30), paths[1], r2=0.4)
            plot_lifetime_vs_size(rng.integers(1, 20, 15), rng.random(15) * 2000, paths[2])
            for path in paths:
                with open(path, "rb") as f:
                    self.assertEqual(f.read(8), b"\x89PNG\r\n\x1a\n")


if __name__ == "__main__":
    unittest.main()

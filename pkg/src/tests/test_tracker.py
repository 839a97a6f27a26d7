import os
import tempfile
import unittest
from types import SimpleNamespace

import numpy as np

from src.core.errors import DimMismatch, ValidationError
from src.core.segmentation import build_segment_frame
from src.core.synth import BlobSpec, SceneSpec, generate, id_consistency
from src.core.tensor_io import argmax_labels
from src.core.tracker import (
    SegmentTracker,
    TrackedSequence,
    TrackEntry,
    TrackerConfig,
    _FrameMatch,
    lifetime_stats,
    load_track_assignments,
    min_segment_distance,
    overlap,
    predict_center,
    step1_aggregate,
    step2_shift_match,
    step3_overlap_match,
    step4_regression_match,
    track_sequence,
    write_tracks_csv,
)


def pixels(*coords):
    rows, cols = zip(*coords)
    return SimpleNamespace(rows=np.array(rows), cols=np.array(cols))


def square(height, width, top, left, size, label=1):
    labels = np.zeros((height, width), dtype=np.int32)
    labels[top : top + size, left : left + size] = label
    return labels


def track_scene(spec, cfg=None):
    scene = generate(spec)
    frames = [build_segment_frame(argmax_labels(t), i) for i, t in enumerate(scene.tensors)]
    return track_sequence(frames, cfg), scene


def quiet_scene(blobs, frames=14):
    return SceneSpec(height=64, width=96, num_classes=4, frames=frames, blobs=tuple(blobs), jitter=0.0)


def entry(frame, rows, cols, label=1, track_seg=1):
    rr, cc = np.mgrid[rows, cols]
    rr, cc = rr.ravel(), cc.ravel()
    return TrackEntry(frame, (track_seg,), (float(rr.mean()), float(cc.mean())), int(rr.size), label, rr, cc)


def frame_match(t, boxes, shape, cfg):
    labels = np.zeros(shape, dtype=np.int32)
    for rows, cols in boxes:
        labels[rows, cols] = 1
    return _FrameMatch(t, step1_aggregate(build_segment_frame(labels, t), cfg), shape)


def matched_rows(fm, matches):
    return [int(fm.entities[index].rows.min()) for _, index in matches]


class TestMatchingSteps(unittest.TestCase):
    cfg = TrackerConfig(c_near=5.0)

    def test_reversal_matched_by_distance(self):
        histories = {7: [entry(0, slice(5, 13), slice(10, 18)), entry(1, slice(5, 13), slice(20, 28))]}
        # moved back by 15 columns: the shifted mask misses, d = 15 + 25
        fm = frame_match(2, [(slice(5, 13), slice(5, 13))], (20, 60), self.cfg)
        self.assertEqual(step2_shift_match(histories, fm, self.cfg), [(7, fm.entities[-1].index)])
        self.assertEqual(fm.entities[-1].label, 1)

        strict = TrackerConfig(c_near=5.0, c_dist=30.0)
        fm = frame_match(2, [(slice(5, 13), slice(5, 13))], (20, 60), strict)
        self.assertEqual(step2_shift_match(histories, fm, strict), [])

    def test_highest_positive_overlap_below_threshold(self):
        histories = {3: [entry(0, slice(10, 30), slice(10, 30))]}
        boxes = [
            (slice(10, 20), slice(28, 38)),  # overlap 0.2
            (slice(27, 37), slice(10, 20)),  # overlap 0.3
        ]
        fm = frame_match(1, boxes, (50, 50), self.cfg)
        matches = step3_overlap_match(histories, fm, self.cfg)
        self.assertEqual(matched_rows(fm, matches), [27])

    def test_overlap_at_threshold_is_matched(self):
        histories = {3: [entry(0, slice(10, 30), slice(10, 30))]}
        boxes = [
            (slice(23, 33), slice(20, 40)),  # 70 of 200 pixels: exactly 0.35
            (slice(4, 14), slice(10, 20)),  # 40 of 100 pixels
        ]
        fm = frame_match(1, boxes, (50, 50), self.cfg)
        big = next(e for e in fm.entities if e.label == 1 and e.size == 200)
        self.assertEqual(overlap(big, histories[3][0]), 0.35)
        matches = step3_overlap_match(histories, fm, self.cfg)
        self.assertEqual(matched_rows(fm, matches), [23])

    def test_no_overlap_no_match(self):
        histories = {3: [entry(0, slice(0, 5), slice(0, 5))]}
        fm = frame_match(1, [(slice(20, 25), slice(20, 25))], (40, 40), self.cfg)
        self.assertEqual(step3_overlap_match(histories, fm, self.cfg), [])

    def test_regression_follows_the_line(self):
        histories = {4: [entry(t, slice(20, 26), slice(10 + 10 * t, 16 + 10 * t)) for t in range(3)]}
        fm = frame_match(4, [(slice(20, 26), slice(48, 54))], (120, 120), self.cfg)
        self.assertEqual(matched_rows(fm, step4_regression_match(histories, fm, self.cfg)), [20])

    def test_sharp_turn_stays_unmatched(self):
        histories = {4: [entry(t, slice(20, 26), slice(10 + 10 * t, 16 + 10 * t)) for t in range(3)]}
        # predicted near (22.5, 52.5); the blob turned down to (82.5, 30.5)
        fm = frame_match(4, [(slice(80, 86), slice(28, 34))], (120, 120), self.cfg)
        self.assertEqual(step4_regression_match(histories, fm, self.cfg), [])


class TestBasics(unittest.TestCase):
    def test_overlap(self):
        j = pixels((0, 0), (0, 1), (1, 0), (1, 1))
        k = pixels((0, 1), (1, 1), (2, 2))
        self.assertAlmostEqual(overlap(j, k), 0.5)
        self.assertAlmostEqual(overlap(k, j), 2 / 3)
        self.assertEqual(overlap(j, pixels((5, 5))), 0.0)

    def test_overlap_empty_j(self):
        with self.assertRaises(ValidationError):
            overlap(SimpleNamespace(rows=np.array([]), cols=np.array([])), pixels((0, 0)))

    def test_distance_three_four_five(self):
        labels = np.zeros((10, 10), dtype=np.int32)
        labels[0, 0] = 1
        labels[3, 4] = 1
        sf = build_segment_frame(labels)
        ones = [k for k in sf.segments if k.label == 1]
        self.assertEqual(len(ones), 2)
        self.assertAlmostEqual(min_segment_distance(ones[0], ones[1]), 5.0)

    def test_aggregation_is_transitive(self):
        labels = np.zeros((10, 30), dtype=np.int32)
        labels[4:6, 0:2] = 1
        labels[4:6, 8:10] = 1
        labels[4:6, 16:18] = 1
        sf = build_segment_frame(labels)
        entities = step1_aggregate(sf, TrackerConfig())
        ones = [e for e in entities if e.label == 1]
        self.assertEqual(len(ones), 1)
        self.assertEqual(len(ones[0].seg_ids), 3)
        self.assertEqual(ones[0].size, 12)

    def test_different_classes_never_merge(self):
        labels = np.zeros((10, 10), dtype=np.int32)
        labels[2:4, 2:4] = 1
        labels[2:4, 5:7] = 2
        entities = step1_aggregate(build_segment_frame(labels), TrackerConfig())
        self.assertEqual(sorted(e.label for e in entities), [0, 1, 2])

    def test_predict_center_is_linear(self):
        entries = [SimpleNamespace(frame=f, center=(2.0 + f, 10.0 - 2 * f)) for f in range(4)]
        np.testing.assert_allclose(predict_center(entries, 6), [8.0, -2.0])

    def test_config_validation(self):
        with self.assertRaises(ValidationError):
            TrackerConfig(c_over=1.5)
        with self.assertRaises(ValidationError):
            TrackerConfig(c_near=0)

    def test_frame_size_must_not_change(self):
        tracker = SegmentTracker()
        tracker.update(build_segment_frame(np.zeros((4, 4), dtype=np.int32)))
        with self.assertRaises(DimMismatch):
            tracker.update(build_segment_frame(np.zeros((5, 4), dtype=np.int32)))


class TestTracking(unittest.TestCase):
    def test_moving_square_keeps_its_id(self):
        frames = [build_segment_frame(square(30, 60, 10, 5 + 3 * t, 8), t) for t in range(12)]
        ts = track_sequence(frames)
        ids = {k.track_id for sf in ts.frames for k in sf.segments if k.label == 1}
        self.assertEqual(len(ids), 1)
        self.assertEqual(len(ts.histories), 2)

    def test_linear_blobs(self):
        blobs = [
            BlobSpec("rectangle", (8.0, 8.0), 1, start=(12.0, 10.0), velocity=(0.0, 2.0)),
            BlobSpec("rectangle", (8.0, 8.0), 2, start=(32.0, 80.0), velocity=(0.0, -2.0)),
            BlobSpec("disk", (5.0,), 3, start=(52.0, 20.0), velocity=(0.0, 1.5)),
        ]
        ts, scene = track_scene(quiet_scene(blobs))
        self.assertEqual(id_consistency(ts, scene.truth), 1.0)

    def test_occlusion_gap_is_bridged(self):
        blob = BlobSpec(
            "rectangle", (8.0, 8.0), 1, start=(30.0, 10.0), velocity=(0.0, 3.0), visible=((0, 6), (8, 14))
        )
        ts, scene = track_scene(quiet_scene([blob]))
        self.assertEqual(id_consistency(ts, scene.truth), 1.0)

    def test_gap_splits_track_without_regression(self):
        blob = BlobSpec(
            "rectangle", (8.0, 8.0), 1, start=(30.0, 10.0), velocity=(0.0, 3.0), visible=((0, 6), (8, 14))
        )
        ts, scene = track_scene(quiet_scene([blob]), TrackerConfig(regression=False))
        self.assertLess(id_consistency(ts, scene.truth), 1.0)

    def test_deterministic(self):
        blobs = [BlobSpec("disk", (6.0,), 2, start=(30.0, 20.0), velocity=(1.0, 2.0))]
        first, _ = track_scene(quiet_scene(blobs))
        second, _ = track_scene(quiet_scene(blobs))
        self.assertEqual(first.assignments(), second.assignments())

    def test_frame_count_mismatch(self):
        ts, scene = track_scene(quiet_scene([BlobSpec("disk", (4.0,), 1, start=(20.0, 20.0))], frames=3))
        with self.assertRaises(DimMismatch):
            id_consistency(ts, scene.truth[:2])


class TestExport(unittest.TestCase):
    def test_csv_assignments_rebuild_sequence(self):
        frames = [build_segment_frame(square(20, 40, 5, 2 + 2 * t, 6), t) for t in range(6)]
        ts = track_sequence(frames)
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "tracks.csv")
            write_tracks_csv(ts, path)
            rebuilt = TrackedSequence.from_assignments(frames, load_track_assignments(path))
        self.assertEqual(rebuilt.assignments(), ts.assignments())
        self.assertEqual(rebuilt.track_ids, ts.track_ids)

    def test_missing_assignment(self):
        frames = [build_segment_frame(np.zeros((3, 3), dtype=np.int32), 0)]
        with self.assertRaises(ValidationError):
            TrackedSequence.from_assignments(frames, {})

    def test_lifetime_stats(self):
        frames = [build_segment_frame(square(40, 40, 5, 5, 20), t) for t in range(4)]
        stats = lifetime_stats(track_sequence(frames), min_interior=100)
        self.assertEqual(stats["num_tracks"], 2)
        self.assertEqual(stats["mean_lifetime"], 4.0)
        # the background ring has 960 interior pixels, the square 324
        self.assertEqual(stats["num_large_tracks"], 2)
        self.assertEqual(stats["mean_lifetime_large"], 4.0)


if __name__ == "__main__":
    unittest.main()

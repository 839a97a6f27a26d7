import os
import struct
import tempfile
import unittest

import numpy as np

from src.core.errors import (
    BadMagic,
    BadVersion,
    DimMismatch,
    InvalidLabel,
    InvalidProbability,
    IoFailure,
    ValidationError,
)
from src.core.tensor_io import (
    LabelMap,
    ProbTensor,
    argmax_labels,
    decode_tensor,
    encode_tensor,
    load_tensor,
    store_tensor,
)


def random_probs(rng, h, w, c):
    x = rng.random((h, w, c)) + 1e-3
    return (x / x.sum(axis=2, keepdims=True)).astype(np.float32)


def raw_file(dims, payload, dtype=0, version=1, provenance=0, magic=b"SQTF"):
    head = struct.pack("<4sBBBB", magic, version, dtype, len(dims), provenance)
    head += struct.pack(f"<{len(dims)}I", *dims)
    item = "<f4" if dtype == 0 else "<i4"
    return head + np.asarray(payload, dtype=item).tobytes()


class TestLoad(unittest.TestCase):
    def test_uniform_field(self):
        t = decode_tensor(raw_file((2, 2, 2), [0.5] * 8), expected_kind="prob")
        self.assertIsInstance(t, ProbTensor)
        self.assertEqual((t.height, t.width, t.num_classes), (2, 2, 2))

    def test_payload_length_mismatch(self):
        with self.assertRaises(DimMismatch):
            decode_tensor(raw_file((3, 3, 2), [0.5] * 16))

    def test_label_out_of_range(self):
        raw = raw_file((1, 2), [0, 7], dtype=1)
        with self.assertRaises(InvalidLabel):
            decode_tensor(raw, expected_kind="label", num_classes=5)

    def test_ignore_label_allowed(self):
        lm = decode_tensor(raw_file((1, 2), [-1, 4], dtype=1), num_classes=5)
        self.assertEqual(lm.data.tolist(), [[-1, 4]])

    def test_row_sum_tolerance(self):
        ok = decode_tensor(raw_file((1, 1, 2), [0.5, 0.50005]))
        self.assertEqual(ok.num_classes, 2)
        with self.assertRaises(InvalidProbability):
            decode_tensor(raw_file((1, 1, 2), [0.5, 0.5002]))

    def test_negative_probability(self):
        with self.assertRaises(InvalidProbability):
            decode_tensor(raw_file((1, 1, 2), [-0.1, 1.1]))

    def test_single_class_rejected(self):
        with self.assertRaises(InvalidProbability):
            decode_tensor(raw_file((1, 1, 1), [1.0]))

    def test_bad_magic_and_version(self):
        with self.assertRaises(BadMagic):
            decode_tensor(raw_file((1, 1, 2), [0.5, 0.5], magic=b"SQTX"))
        with self.assertRaises(BadMagic):
            decode_tensor(b"SQ")
        with self.assertRaises(BadVersion):
            decode_tensor(raw_file((1, 1, 2), [0.5, 0.5], version=2))

    def test_wrong_kind(self):
        with self.assertRaises(ValidationError):
            decode_tensor(raw_file((1, 1, 2), [0.5, 0.5]), expected_kind="label")

    def test_error_names_the_file(self):
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "broken.sqtf")
            with open(path, "wb") as f:
                f.write(raw_file((1, 1, 2), [0.9, 0.9]))
            with self.assertRaises(InvalidProbability) as ctx:
                load_tensor(path)
            self.assertIn("broken.sqtf", str(ctx.exception))

    def test_header_byte_flips_rejected(self):
        rng = np.random.default_rng(0)
        files = [
            encode_tensor(ProbTensor(random_probs(rng, 3, 4, 3))),
            encode_tensor(LabelMap(rng.integers(0, 3, size=(3, 4)))),
        ]
        for raw in files:
            ndim = raw[6]
            for i in range(8 + 4 * ndim):
                flipped = bytearray(raw)
                flipped[i] ^= 0xFF
                with self.assertRaises(ValidationError, msg=f"byte {i}"):
                    decode_tensor(bytes(flipped), num_classes=3)


class TestStore(unittest.TestCase):
    def test_round_trip_bytes(self):
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "t.sqtf")
            t = ProbTensor(np.array([[[0.3, 0.7]]], dtype=np.float32))
            store_tensor(t, path)
            again = load_tensor(path, expected_kind="prob")
            self.assertEqual(encode_tensor(again), encode_tensor(t))
            self.assertEqual(os.path.getsize(path), 8 + 12 + 8)

    def test_round_trip_random(self):
        rng = np.random.default_rng(1)
        data = random_probs(rng, 64, 64, 8)
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "r.sqtf")
            store_tensor(ProbTensor(data), path)
            np.testing.assert_array_equal(load_tensor(path).data, data)

    def test_pseudo_flag_survives(self):
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "p.sqtf")
            store_tensor(LabelMap(np.zeros((2, 2)), pseudo=True), path)
            lm = load_tensor(path, expected_kind="label")
            self.assertTrue(lm.pseudo)
            self.assertEqual(lm.provenance, "pseudo")

    def test_unwritable_path(self):
        with tempfile.TemporaryDirectory() as td:
            blocker = os.path.join(td, "file")
            with open(blocker, "w") as f:
                f.write("x")
            with self.assertRaises(IoFailure):
                store_tensor(LabelMap(np.zeros((1, 1))), os.path.join(blocker, "sub", "t.sqtf"))

    def test_loaded_objects_are_read_only(self):
        t = decode_tensor(raw_file((1, 1, 2), [0.5, 0.5]))
        with self.assertRaises(ValueError):
            t.data[0, 0, 0] = 1.0


class TestArgmax(unittest.TestCase):
    def test_simple(self):
        t = ProbTensor(np.array([[[0.1, 0.7, 0.2]]], dtype=np.float32))
        self.assertEqual(argmax_labels(t).data[0, 0], 1)

    def test_tie_goes_to_smallest_class(self):
        t = ProbTensor(np.array([[[0.5, 0.5]]], dtype=np.float32))
        self.assertEqual(argmax_labels(t).data[0, 0], 0)

    def test_matches_per_pixel_scan(self):
        rng = np.random.default_rng(2)
        data = random_probs(rng, 16, 16, 4)
        labels = argmax_labels(ProbTensor(data)).data
        for r in range(16):
            for c in range(16):
                best = 0
                for y in range(1, 4):
                    if data[r, c, y] > data[r, c, best]:
                        best = y
                self.assertEqual(labels[r, c], best)
        self.assertGreaterEqual(labels.min(), 0)


if __name__ == "__main__":
    unittest.main()

# src/apps/windowing/tests.py
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.ais.schemas import Trajectory
from apps.common.errors import FileFormatError, TooFewTrajectories
from apps.geo.schemas import GeoPoint, Standardizer
from apps.nn.rng import make_rng

from .sample_io import format_samples, parse_samples, read_samples, write_samples
from .services import kfold_split, one_hot, segment, segment_all, stack_samples, window_count


def line_track(T, *, traj_id=0, label=None):
    return Trajectory(
        traj_id=traj_id,
        mmsi=219000000 + traj_id,
        times=tuple(900.0 * i for i in range(T)),
        states=tuple(GeoPoint(lat=55.0 + 0.01 * i, lon=10.0 + 0.02 * i) for i in range(T)),
        label=label,
    )


class WindowCountTests(SimpleTestCase):
    def test_known_counts(self):
        self.assertEqual(window_count(30, 12, 12), 7)
        self.assertEqual(window_count(24, 12, 12), 1)
        self.assertEqual(window_count(23, 12, 12), 0)

    def test_random_triples_match_segment(self):
        rng = make_rng(5)
        for _ in range(1000):
            T = int(rng.integers(0, 60))
            ell = int(rng.integers(1, 15))
            h = int(rng.integers(1, 15))
            self.assertEqual(window_count(T, ell, h), max(0, T - (ell + h) + 1))
        # 実際の切り出し数とも一致する
        for T in (2, 10, 24, 31):
            self.assertEqual(len(segment(line_track(T), 4, 3)), window_count(T, 4, 3))


class SegmentTests(SimpleTestCase):
    def test_contents_and_overlap(self):
        traj = line_track(30)
        samples = segment(traj, 12, 12)
        self.assertEqual(len(samples), 7)
        first, second = samples[0], samples[1]
        self.assertEqual(first.k, 11)
        np.testing.assert_array_equal(first.input, traj.lonlat[0:12])
        np.testing.assert_array_equal(first.target, traj.lonlat[12:24])
        # 連続する窓の入力は ℓ−1 行ずれて重なる
        np.testing.assert_array_equal(first.input[1:], second.input[:-1])
        self.assertTrue(all(s.psi is None for s in samples))

    def test_too_short_gives_nothing(self):
        self.assertEqual(segment(line_track(23), 12, 12), [])

    def test_standardized_and_labeled(self):
        std = Standardizer(mean=(10.0, 55.0), std=(0.5, 0.25))
        samples = segment(line_track(10, label=1), 4, 3, standardizer=std, n_patterns=2)
        np.testing.assert_array_equal(samples[0].psi, [0.0, 1.0])
        np.testing.assert_allclose(samples[0].input[0], [0.0, 0.0])
        np.testing.assert_allclose(std.invert_array(samples[0].target), line_track(10).lonlat[4:7])

    def test_stack(self):
        samples = segment_all([line_track(10, traj_id=0, label=0), line_track(9, traj_id=1, label=1)], 4, 3, n_patterns=2)
        batch = stack_samples(samples, ell=4, h=3)
        self.assertEqual(batch.X.shape, (len(samples), 4, 2))
        self.assertEqual(batch.Y.shape, (len(samples), 3, 2))
        self.assertEqual(batch.psi.shape, (len(samples), 2))
        self.assertEqual(sorted(set(batch.traj_ids.tolist())), [0, 1])
        self.assertIsNone(batch.without_psi().psi)
        self.assertEqual(len(batch.take(np.array([0, 2]))), 2)

    def test_stack_empty(self):
        batch = stack_samples([], ell=4, h=3)
        self.assertEqual(batch.X.shape, (0, 4, 2))


class OneHotTests(SimpleTestCase):
    def test_one_hot(self):
        np.testing.assert_array_equal(one_hot(1, 3), [0.0, 1.0, 0.0])
        with self.assertRaises(IndexError):
            one_hot(3, 3)


class KFoldTests(SimpleTestCase):
    def test_sizes_partition_and_determinism(self):
        plan = kfold_split(range(10), 3, seed=7)
        sizes = sorted(len(plan.fold_ids(f)) for f in range(3))
        self.assertEqual(sizes, [3, 3, 4])
        all_ids = sorted(t for f in range(3) for t in plan.fold_ids(f))
        self.assertEqual(all_ids, list(range(10)))
        self.assertEqual(kfold_split(range(10), 3, seed=7), plan)

    def test_split_keeps_trajectories_apart(self):
        plan = kfold_split(range(20), 5, seed=1)
        for fold in range(5):
            train, val, test = plan.split(fold)
            self.assertEqual(len(val), 2)
            self.assertFalse(set(train) & set(test))
            self.assertFalse(set(val) & set(test))
            self.assertFalse(set(train) & set(val))
            self.assertEqual(len(train) + len(val) + len(test), 20)

    def test_too_few(self):
        with self.assertRaises(TooFewTrajectories):
            kfold_split([1, 2], 3, seed=0)

    def test_every_fold_keeps_a_validation_trajectory(self):
        with self.assertRaises(TooFewTrajectories):
            kfold_split([0, 1], 2, seed=0)
        with self.assertRaises(TooFewTrajectories):
            kfold_split([0, 1, 2], 2, seed=0)
        plan = kfold_split([0, 1, 2, 3], 2, seed=0)
        for fold in range(2):
            train, val, _ = plan.split(fold)
            self.assertEqual((len(train), len(val)), (1, 1))


class SampleFileTests(SimpleTestCase):
    def test_text_round_trip(self):
        std = Standardizer(mean=(10.1, 55.1), std=(0.3, 0.2))
        samples = segment(line_track(9, label=0), 4, 3, standardizer=std, n_patterns=2)
        text = format_samples(samples, ell=4, h=3, P=2, standardizer=std)
        loaded = parse_samples(text)
        self.assertEqual((loaded.ell, loaded.h, loaded.P), (4, 3, 2))
        self.assertEqual(loaded.standardizer, std)
        self.assertEqual(len(loaded.samples), len(samples))
        np.testing.assert_array_equal(loaded.samples[0].input, samples[0].input)

    def test_file_round_trip_without_labels(self):
        samples = segment(line_track(6), 3, 2)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "windows.txt"
            write_samples(path, samples, ell=3, h=2, P=0, standardizer=None)
            loaded = read_samples(path)
        self.assertIsNone(loaded.standardizer)
        self.assertEqual(len(loaded.samples), 2)
        self.assertIsNone(loaded.samples[1].psi)
        np.testing.assert_array_equal(loaded.samples[1].target, samples[1].target)

    def test_bad_magic(self):
        with self.assertRaises(FileFormatError):
            parse_samples("hello\n")

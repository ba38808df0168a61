# src/apps/training/tests.py
import numpy as np
from django.test import SimpleTestCase

from apps.ais.schemas import Trajectory
from apps.common.errors import ConfigMismatch, NonFiniteLoss
from apps.evaluation.schemas import ReportBundle
from apps.geo.schemas import GeoPoint
from apps.nn.params import AdamConfig
from apps.nn.rng import make_rng
from apps.nn.schemas import ModelConfig
from apps.windowing.schemas import SampleBatch
from apps.windowing.services import window_count

from .schemas import TrainConfig
from .services import build_model, cross_validate, parse_model_id, train, validation_loss


def linear_task(n, seed, *, ell=3, h=2):
    """ターゲットが入力の線形関数になっている（学習で解ける）データ。"""
    rng = make_rng(seed)
    X = rng.normal(size=(n, ell, 2))
    M = make_rng(99).normal(0.0, 0.5, size=(h * 2, ell * 2))
    Y = (X.reshape(n, -1) @ M.T).reshape(n, h, 2)
    return SampleBatch(X=X, Y=Y, psi=None, traj_ids=np.arange(n), anchors=np.zeros(n, dtype=np.int64))


def mlp_config(width=16):
    return ModelConfig(kind="mlp", ell=3, h=2, mlp_width=width)


def noisy_track(traj_id, label, T=20):
    rng = make_rng(traj_id, "track")
    heading = 0.02 if label == 0 else -0.02
    states = tuple(
        GeoPoint(lat=55.0 + heading * i + rng.normal(0, 0.002), lon=10.0 + 0.03 * i + rng.normal(0, 0.002))
        for i in range(T)
    )
    return Trajectory(
        traj_id=traj_id, mmsi=219000000 + traj_id, times=tuple(900.0 * i for i in range(T)), states=states, label=label
    )


class TrainConfigTests(SimpleTestCase):
    def test_patience_must_be_below_max_epochs(self):
        with self.assertRaises(ConfigMismatch):
            TrainConfig(max_epochs=5, patience=5)

    def test_unknown_loss(self):
        with self.assertRaises(ConfigMismatch):
            TrainConfig(loss="huber")

    def test_defaults(self):
        cfg = TrainConfig()
        self.assertEqual((cfg.max_epochs, cfg.batch_size, cfg.patience, cfg.loss), (3000, 200, 50, "mae"))
        self.assertEqual(cfg.adam.lr, 1e-4)


class TrainTests(SimpleTestCase):
    def test_frozen_lr_stops_after_two_epochs(self):
        model = build_model(mlp_config(), 0)
        cfg = TrainConfig(max_epochs=20, batch_size=8, patience=1, adam=AdamConfig(lr=0.0))
        report = train(model, linear_task(30, 1), linear_task(10, 2), cfg)
        self.assertEqual(report.epochs_run, 2)
        self.assertTrue(report.stopped_early)
        self.assertEqual(report.best_epoch, 1)
        self.assertEqual(report.val_losses[0], report.val_losses[1])
        self.assertEqual(report.val_losses[0], report.initial_val_loss)

    def test_same_seed_same_losses(self):
        cfg = TrainConfig(max_epochs=5, batch_size=7, patience=2, adam=AdamConfig(lr=1e-3), seed=4)
        a = train(build_model(mlp_config(), 3), linear_task(30, 1), linear_task(10, 2), cfg)
        b = train(build_model(mlp_config(), 3), linear_task(30, 1), linear_task(10, 2), cfg)
        self.assertEqual(a.to_dict(), b.to_dict())
        self.assertNotIn("wall_time", a.to_dict())

    def test_best_snapshot_is_restored(self):
        model = build_model(mlp_config(), 5)
        val = linear_task(10, 2)
        cfg = TrainConfig(max_epochs=30, batch_size=8, patience=3, adam=AdamConfig(lr=5e-2))
        report = train(model, linear_task(40, 1), val, cfg)
        self.assertEqual(validation_loss(model, val, "mae", cfg.batch_size), report.best_val_loss)
        self.assertEqual(report.best_val_loss, min(report.val_losses))
        for later in report.val_losses[report.best_epoch:]:
            self.assertGreaterEqual(later, report.best_val_loss)

    def test_mlp_learns_linear_task(self):
        model = build_model(mlp_config(width=64), 0)
        cfg = TrainConfig(max_epochs=200, batch_size=32, patience=50, adam=AdamConfig(lr=5e-3))
        report = train(model, linear_task(512, 1), linear_task(64, 2), cfg)
        self.assertLessEqual(report.best_val_loss, 0.1 * report.initial_val_loss)

    def test_linear_is_fit_in_one_epoch(self):
        model = build_model(ModelConfig(kind="linear", ell=3, h=2), 0)
        report = train(model, linear_task(40, 1), linear_task(10, 2), TrainConfig(max_epochs=5, patience=1))
        self.assertEqual(report.epochs_run, 1)
        self.assertLess(report.best_val_loss, 1e-6)

    def test_non_finite_loss(self):
        model = build_model(mlp_config(), 0)
        cfg = TrainConfig(max_epochs=50, batch_size=8, patience=10, adam=AdamConfig(lr=1e300))
        with np.errstate(all="ignore"):
            with self.assertRaises(NonFiniteLoss) as ctx:
                train(model, linear_task(30, 1), linear_task(10, 2), cfg)
        self.assertIn("epoch", ctx.exception.details)
        self.assertIn("norms", ctx.exception.details)

    def test_labeled_model_needs_labels(self):
        model = build_model(ModelConfig(kind="mlp", ell=3, h=2, P=2, labeled=True, mlp_width=8), 0)
        with self.assertRaises(ConfigMismatch):
            train(model, linear_task(10, 1), linear_task(5, 2), TrainConfig(max_epochs=3, patience=1))

    def test_empty_sets_rejected(self):
        empty = SampleBatch(
            X=np.zeros((0, 3, 2)), Y=np.zeros((0, 2, 2)), psi=None, traj_ids=np.zeros(0), anchors=np.zeros(0)
        )
        with self.assertRaises(ConfigMismatch):
            train(build_model(mlp_config(), 0), empty, linear_task(5, 2), TrainConfig(max_epochs=3, patience=1))


class RegistryTests(SimpleTestCase):
    def test_parse_model_id(self):
        self.assertEqual(parse_model_id("encdec-attn"), ("encdec", "attn"))
        self.assertEqual(parse_model_id("linear"), ("linear", None))
        with self.assertRaises(ConfigMismatch):
            parse_model_id("encdec")
        with self.assertRaises(ConfigMismatch):
            parse_model_id("transformer")


class CrossValidateTests(SimpleTestCase):
    def setUp(self):
        self.trajs = [noisy_track(i, i % 2) for i in range(10)]
        self.models = [
            ModelConfig(kind="linear", ell=4, h=4, P=2, labeled=False),
            ModelConfig(kind="linear", ell=4, h=4, P=2, labeled=True),
        ]
        self.cfg = TrainConfig(max_epochs=2, patience=1, seed=3)

    def run_cv(self, threads=1):
        return cross_validate(
            self.trajs, self.models, self.cfg, K=2, delta_sec=900.0, pattern_names=("A", "B"), threads=threads
        )

    def test_two_folds_two_rows_per_model(self):
        result = self.run_cv()
        self.assertEqual([f.fold for f in result.folds], [0, 1])
        self.assertEqual(result.failures, [])
        self.assertEqual(len([r for r in result.reports if not r.labeled]), 2)
        self.assertEqual(len([r for r in result.reports if r.labeled]), 2)

    def test_window_totals_match_closed_form(self):
        result = self.run_cv()
        expected = sum(window_count(len(t), 4, 4) for t in self.trajs)
        self.assertEqual(result.window_totals(), [expected, expected])

    def test_fold_average_is_mean_of_folds(self):
        result = self.run_cv()
        bundle = ReportBundle(delta_sec=900.0, h=4, reports=tuple(result.reports))
        per_fold = [r.mae_per_horizon for r in result.reports if r.model_id == "linear" and not r.labeled]
        np.testing.assert_allclose(bundle.mean_mae("linear", False), (per_fold[0] + per_fold[1]) / 2.0, atol=1e-12)

    def test_threads_do_not_change_results(self):
        a = self.run_cv(threads=1)
        b = self.run_cv(threads=2)
        for ra, rb in zip(a.reports, b.reports):
            np.testing.assert_array_equal(ra.mae_per_horizon, rb.mae_per_horizon)

    def test_labeled_models_need_labels(self):
        self.trajs = [t.with_label(None) for t in self.trajs]
        with self.assertRaises(ConfigMismatch):
            self.run_cv()

    def test_failures_are_recorded_and_other_models_continue(self):
        # パターン名が無いと ψ を作れないので、ラベル付きモデルだけが失敗する
        result = cross_validate(self.trajs, self.models, self.cfg, K=2, delta_sec=900.0, threads=1)
        self.assertEqual(len(result.failures), 2)
        self.assertTrue(all("code=ConfigMismatch" in f for f in result.failures))
        self.assertEqual([r.labeled for r in result.reports], [False, False])

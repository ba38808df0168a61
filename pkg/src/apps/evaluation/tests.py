# src/apps/evaluation/tests.py
import numpy as np
from django.test import SimpleTestCase

from apps.baselines.services import LinearModel
from apps.ais.schemas import Trajectory
from apps.common.errors import ShapeMismatch, UnsupportedFormat
from apps.geo.schemas import GeoPoint, Standardizer
from apps.nn.rng import make_rng
from apps.nn.schemas import ModelConfig
from apps.windowing.schemas import SampleBatch

from .schemas import EvalReport, ReportBundle, report_horizons
from .services import (
    default_origin,
    emit_report,
    empirical_cdf,
    evaluate_model,
    improvement_percent,
    mae_per_horizon,
    mae_vs_distance,
    per_route_mae,
    traveled_distances,
)


def report(model_id="encdec-attn", labeled=False, fold=0, mae=(1.0, 2.0, 3.0, 4.0), final=None, anchors=None, routes=None):
    mae = np.array(mae, dtype=np.float64)
    final = np.array(final if final is not None else [mae[-1]], dtype=np.float64)
    anchors = np.array(anchors if anchors is not None else [0.0] * final.size, dtype=np.float64)
    return EvalReport(
        model_id=model_id,
        labeled=labeled,
        fold=fold,
        mae_per_horizon=mae,
        final_errors=final,
        anchor_distances=anchors,
        route_labels=None if routes is None else np.array(routes),
    )


class MaeTests(SimpleTestCase):
    def test_identical_predictions(self):
        y = make_rng(1).uniform(-10, 10, size=(5, 3, 2))
        np.testing.assert_array_equal(mae_per_horizon(y, y), np.zeros(3))

    def test_one_degree_on_equator(self):
        target = np.zeros((1, 4, 2))
        pred = target.copy()
        pred[..., 0] += 1.0
        np.testing.assert_allclose(mae_per_horizon(pred, target), np.full(4, 60.04), atol=0.01)

    def test_mean_of_two_samples(self):
        target = np.zeros((2, 2, 2))
        pred = target.copy()
        pred[0, :, 0] += 1.0
        single = mae_per_horizon(pred[:1], target[:1])
        np.testing.assert_allclose(mae_per_horizon(pred, target), single / 2.0, atol=1e-12)

    def test_permutation_invariance(self):
        rng = make_rng(2)
        pred = rng.uniform(-1, 1, size=(6, 3, 2))
        target = rng.uniform(-1, 1, size=(6, 3, 2))
        perm = np.array([5, 3, 1, 0, 2, 4])
        np.testing.assert_allclose(mae_per_horizon(pred[perm], target[perm]), mae_per_horizon(pred, target), atol=1e-12)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            mae_per_horizon(np.zeros((1, 2, 2)), np.zeros((1, 3, 2)))


class CdfTests(SimpleTestCase):
    def test_single_value(self):
        self.assertEqual(empirical_cdf(np.array([2.5])), [(2.5, 1.0)])

    def test_ties(self):
        self.assertEqual(empirical_cdf(np.array([1.0, 1.0])), [(1.0, 0.5), (1.0, 1.0)])

    def test_random_is_monotone_and_ends_at_one(self):
        cdf = empirical_cdf(make_rng(3).exponential(size=50))
        xs = [x for x, _ in cdf]
        fs = [f for _, f in cdf]
        self.assertEqual(xs, sorted(xs))
        self.assertEqual(fs, sorted(fs))
        self.assertEqual(fs[-1], 1.0)
        self.assertEqual(fs[0], 1.0 / 50)

    def test_empty(self):
        with self.assertRaises(ShapeMismatch):
            empirical_cdf(np.array([]))


class HorizonTests(SimpleTestCase):
    def test_quarter_hour(self):
        self.assertEqual(report_horizons(900.0, 12), [4, 8, 12])

    def test_half_hour(self):
        self.assertEqual(report_horizons(1800.0, 12), [2, 4, 6, 8, 10, 12])

    def test_shorter_than_an_hour(self):
        self.assertEqual(report_horizons(900.0, 3), [3])


class DistanceTests(SimpleTestCase):
    def test_bins(self):
        r = report(final=[1.0, 3.0, 10.0], anchors=[1.0, 4.0, 12.0])
        self.assertEqual(mae_vs_distance(r, 5.0), [(2.5, 2.0, 2), (12.5, 10.0, 1)])

    def test_default_origin(self):
        trajs = [
            Trajectory(traj_id=i, mmsi=1, times=(0.0, 60.0), states=(GeoPoint(55.0 + i, 10.0), GeoPoint(56.0, 11.0)))
            for i in range(2)
        ]
        self.assertEqual(default_origin(trajs), GeoPoint(55.5, 10.0))

    def test_traveled_distance_follows_the_track(self):
        # 東へ 1°、北へ 1° と曲がる航跡。原点は始点から北へ 1°
        track = Trajectory(
            traj_id=7,
            mmsi=1,
            times=(0.0, 900.0, 1800.0),
            states=(GeoPoint(55.0, 10.0), GeoPoint(55.0, 11.0), GeoPoint(56.0, 11.0)),
        )
        leg_east = 60.04 * np.cos(np.radians(55.0))
        leg_north = 60.04
        d = traveled_distances([track], np.array([7, 7, 7]), np.array([0, 1, 2]), GeoPoint(56.0, 10.0))
        np.testing.assert_allclose(d, [leg_north, leg_north + leg_east, 2 * leg_north + leg_east], rtol=2e-3)
        # 大円距離だと最後の点は原点から東へ 1° なので、沿航距離より短い
        self.assertLess(60.04 * np.cos(np.radians(56.0)), d[2])

    def test_traveled_distance_unknown_sample(self):
        track = Trajectory(traj_id=1, mmsi=1, times=(0.0, 60.0), states=(GeoPoint(55.0, 10.0), GeoPoint(55.0, 10.1)))
        with self.assertRaises(ShapeMismatch):
            traveled_distances([track], np.array([2]), np.array([0]), GeoPoint(55.0, 10.0))
        with self.assertRaises(ShapeMismatch):
            traveled_distances([track], np.array([1]), np.array([5]), GeoPoint(55.0, 10.0))


class EvaluateModelTests(SimpleTestCase):
    def test_copy_model_on_standardized_batch(self):
        model = LinearModel(ModelConfig(kind="linear", ell=2, h=2))
        model.params["linear.W"][...] = np.eye(4)
        std = Standardizer(mean=(10.0, 55.0), std=(0.5, 0.5))
        X = np.zeros((3, 2, 2))
        Y = np.zeros((3, 2, 2))
        Y[:, :, 0] = 2.0  # 経度 +1°
        batch = SampleBatch(X=X, Y=Y, psi=None, traj_ids=np.arange(3), anchors=np.full(3, 1))
        r = evaluate_model(model, batch, std, origin=GeoPoint(55.0, 10.0), fold=1)

        self.assertEqual(r.n_samples, 3)
        self.assertEqual(r.fold, 1)
        expected = 60.04 * np.cos(np.radians(55.0))
        np.testing.assert_allclose(r.mae_per_horizon, np.full(2, expected), rtol=1e-3)
        np.testing.assert_allclose(r.anchor_distances, np.zeros(3), atol=1e-9)
        self.assertIsNone(r.route_labels)

    def test_anchor_distances_along_given_trajectories(self):
        model = LinearModel(ModelConfig(kind="linear", ell=2, h=2))
        std = Standardizer(mean=(10.0, 55.0), std=(0.5, 0.5))
        batch = SampleBatch(
            X=np.zeros((3, 2, 2)), Y=np.zeros((3, 2, 2)), psi=None, traj_ids=np.arange(3), anchors=np.full(3, 1)
        )
        trajs = [
            Trajectory(
                traj_id=i,
                mmsi=1,
                times=(0.0, 900.0, 1800.0, 2700.0),
                states=tuple(GeoPoint(55.0, 10.0 + j) for j in range(4)),
            )
            for i in range(3)
        ]
        r = evaluate_model(model, batch, std, origin=GeoPoint(55.0, 10.0), trajectories=trajs)
        np.testing.assert_allclose(r.anchor_distances, np.full(3, 60.04 * np.cos(np.radians(55.0))), rtol=1e-3)

    def test_empty_batch(self):
        model = LinearModel(ModelConfig(kind="linear", ell=2, h=2))
        batch = SampleBatch(
            X=np.zeros((0, 2, 2)), Y=np.zeros((0, 2, 2)), psi=None, traj_ids=np.zeros(0), anchors=np.zeros(0)
        )
        with self.assertRaises(ShapeMismatch):
            evaluate_model(model, batch, Standardizer((0.0, 0.0), (1.0, 1.0)), origin=GeoPoint(0.0, 0.0))


class EmitReportTests(SimpleTestCase):
    def bundle(self):
        return ReportBundle(
            delta_sec=900.0,
            h=12,
            reports=(
                report("linear", False, 0, mae=[1.0] * 11 + [5.0]),
                report("linear", False, 1, mae=[1.0] * 11 + [3.0]),
                report("encdec-attn", False, 0, mae=[1.0] * 11 + [4.0], final=[4.0, 4.0], anchors=[1.0, 2.0]),
                report("encdec-attn", True, 0, mae=[0.5] * 11 + [2.0], final=[2.0, 2.0], anchors=[1.0, 2.0], routes=[0, 1]),
            ),
            pattern_names=("A", "B"),
        )

    def test_improvement_formula(self):
        self.assertEqual(improvement_percent(4.0, 2.0), 50)
        self.assertEqual(improvement_percent(3.66, 1.73), 53)

    def test_table(self):
        text = emit_report(self.bundle(), "table").decode()
        self.assertIn("3h U", text)
        self.assertIn("50%", text)
        linear_row = next(line for line in text.splitlines() if line.startswith("linear"))
        self.assertIn("4.000", linear_row)
        self.assertIn("-", linear_row)

    def test_kv_has_fold_rows_and_means(self):
        text = emit_report(self.bundle(), "kv", per_route=True).decode()
        self.assertIn("model=linear labeled=0 fold=mean n=2", text)
        self.assertIn("mae_12=4.000000", text)
        self.assertIn("route=B mae_final=2.000000", text)

    def test_fold_average_is_arithmetic_mean(self):
        b = self.bundle()
        np.testing.assert_allclose(b.mean_mae("linear", False), [1.0] * 11 + [4.0], atol=1e-12)

    def test_cdf_and_distance_blocks(self):
        cdf = emit_report(self.bundle(), "cdf").decode()
        self.assertIn("# model=encdec-attn labeled=1", cdf)
        self.assertIn("2.000000 1.000000", cdf)
        dist = emit_report(self.bundle(), "distance", bin_nmi=5.0).decode()
        self.assertIn("2.500 2.000000 2", dist)

    def test_byte_stable(self):
        self.assertEqual(emit_report(self.bundle(), "table"), emit_report(self.bundle(), "table"))

    def test_unsupported(self):
        with self.assertRaises(UnsupportedFormat):
            emit_report(self.bundle(), "html")

    def test_per_route(self):
        r = report(final=[1.0, 3.0, 5.0], anchors=[0.0, 0.0, 0.0], routes=[0, 1, 1])
        self.assertEqual(per_route_mae(r), {0: 1.0, 1: 4.0})

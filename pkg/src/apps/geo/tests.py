# src/apps/geo/tests.py
import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from apps.common.errors import DegenerateData

from .schemas import GeoPoint, Standardizer
from .services import (
    EARTH_RADIUS_NMI,
    fit_standardizer,
    haversine_nmi,
    haversine_nmi_array,
)


class HaversineTests(SimpleTestCase):
    def test_same_point_is_zero(self):
        p = GeoPoint(lat=55.0, lon=12.0)
        self.assertEqual(haversine_nmi(p, p), 0.0)

    def test_one_degree_along_equator(self):
        d = haversine_nmi(GeoPoint(0.0, 0.0), GeoPoint(0.0, 1.0))
        self.assertAlmostEqual(d, EARTH_RADIUS_NMI * math.pi / 180.0, places=9)
        self.assertAlmostEqual(d, 60.04, places=2)

    def test_antipodal_on_equator(self):
        d = haversine_nmi(GeoPoint(0.0, 0.0), GeoPoint(0.0, 180.0))
        self.assertAlmostEqual(d, math.pi * EARTH_RADIUS_NMI, places=6)

    def test_one_arc_minute_is_one_nautical_mile(self):
        d = haversine_nmi(GeoPoint(0.0, 0.0), GeoPoint(0.0, 1.0 / 60.0))
        self.assertLess(abs(d - 1.0), 0.001)

    def test_symmetric_on_random_pairs(self):
        rng = np.random.default_rng(7)
        lat = rng.uniform(-90, 90, size=(100_000, 2))
        lon = rng.uniform(-180, 180, size=(100_000, 2))
        ab = haversine_nmi_array(lat[:, 0], lon[:, 0], lat[:, 1], lon[:, 1])
        ba = haversine_nmi_array(lat[:, 1], lon[:, 1], lat[:, 0], lon[:, 0])
        self.assertTrue(np.array_equal(ab, ba))
        self.assertTrue(np.all(ab >= 0.0))

        for i in range(200):
            a = GeoPoint(lat[i, 0], lon[i, 0])
            b = GeoPoint(lat[i, 1], lon[i, 1])
            self.assertEqual(haversine_nmi(a, b), haversine_nmi(b, a))

    def test_invalid_point_is_rejected(self):
        with self.assertRaises(ValidationError):
            GeoPoint(lat=91.0, lon=0.0)
        with self.assertRaises(ValidationError):
            GeoPoint(lat=float("nan"), lon=0.0)


class StandardizerTests(SimpleTestCase):
    def test_two_point_fit_uses_population_std(self):
        s = fit_standardizer([GeoPoint(0.0, 0.0), GeoPoint(2.0, 2.0)])
        self.assertEqual(s.mean, (1.0, 1.0))
        self.assertEqual(s.std, (1.0, 1.0))

    def test_identical_points_are_degenerate(self):
        with self.assertRaises(DegenerateData):
            fit_standardizer([GeoPoint(1.0, 1.0)] * 5)

    def test_fit_output_is_standardized(self):
        rng = np.random.default_rng(3)
        pts = [GeoPoint(lat, lon) for lat, lon in zip(rng.uniform(54, 58, 500), rng.uniform(8, 13, 500))]
        s = fit_standardizer(pts)
        z = np.array([s.apply(p) for p in pts])
        self.assertLess(np.max(np.abs(z.mean(axis=0))), 1e-9)
        self.assertLess(np.max(np.abs(z.std(axis=0) - 1.0)), 1e-9)

        refit = fit_standardizer([GeoPoint(lat=v[1], lon=v[0]) for v in z])
        np.testing.assert_allclose(refit.mean, (0.0, 0.0), atol=1e-9)
        np.testing.assert_allclose(refit.std, (1.0, 1.0), atol=1e-9)

    def test_apply_with_mean_at_point_is_origin(self):
        p = GeoPoint(55.5, 11.25)
        s = Standardizer(mean=(p.lon, p.lat), std=(0.3, 0.7))
        np.testing.assert_array_equal(s.apply(p), [0.0, 0.0])

    def test_identity_transform(self):
        s = Standardizer(mean=(0.0, 0.0), std=(1.0, 1.0))
        np.testing.assert_array_equal(s.apply(GeoPoint(12.5, -3.25)), [-3.25, 12.5])

    def test_invert_apply_round_trip(self):
        rng = np.random.default_rng(11)
        s = Standardizer(mean=(10.5, 55.2), std=(0.8, 0.4))
        for lat, lon in zip(rng.uniform(-90, 90, 100), rng.uniform(-180, 180, 100)):
            q = s.invert(s.apply(GeoPoint(lat, lon)))
            self.assertLess(abs(q.lat - lat), 1e-12)
            self.assertLess(abs(q.lon - lon), 1e-12)

    def test_non_positive_std_is_rejected(self):
        with self.assertRaises(ValidationError):
            Standardizer(mean=(0.0, 0.0), std=(0.0, 1.0))

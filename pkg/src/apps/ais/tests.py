# src/apps/ais/tests.py
import numpy as np
from django.test import SimpleTestCase

from apps.common.errors import FileFormatError, SchemaError, TooShort
from apps.geo.schemas import GeoPoint

from .polygons import format_polygons, parse_polygons
from .schemas import AisRecord, PatternSpec, Polygon, SchemaConfig, Trajectory
from .services import (
    assemble_trajectories,
    label_trajectories,
    match_pattern,
    parse_records,
    point_in_polygon,
    resample,
    resample_all,
)
from .trajectory_io import format_trajectories, parse_trajectories

SCHEMA = SchemaConfig.parse("timestamp=ts,mmsi=MMSI,lat=Latitude,lon=Longitude,ship_type=Ship type")


def square(name, lat0, lon0, size=1.0):
    return Polygon(
        name=name,
        vertices=(
            GeoPoint(lat0, lon0),
            GeoPoint(lat0, lon0 + size),
            GeoPoint(lat0 + size, lon0 + size),
            GeoPoint(lat0 + size, lon0),
        ),
    )


def track(points, *, start=0.0, step=60.0, traj_id=0):
    return Trajectory(
        traj_id=traj_id,
        mmsi=219000001,
        times=tuple(start + step * i for i in range(len(points))),
        states=tuple(GeoPoint(lat, lon) for lat, lon in points),
    )


class SchemaConfigTests(SimpleTestCase):
    def test_file_form_and_aliases(self):
        s = SchemaConfig.parse("timestamp=# Timestamp\nmmsi=MMSI\nlat=Latitude\nlon=Longitude\ndelimiter=semicolon\n")
        self.assertEqual(s.timestamp, "# Timestamp")
        self.assertEqual(s.delimiter, ";")
        self.assertEqual(SchemaConfig.parse(s.to_text()), s)

    def test_missing_key(self):
        with self.assertRaises(SchemaError):
            SchemaConfig.parse("timestamp=ts,mmsi=MMSI,lat=Latitude")

    def test_unknown_key(self):
        with self.assertRaises(SchemaError):
            SchemaConfig.parse("timestamp=ts,mmsi=MMSI,lat=Latitude,lon=Longitude,speed=SOG")


class ParseRecordsTests(SimpleTestCase):
    def test_well_formed_rows(self):
        data = (
            b"ts,MMSI,Latitude,Longitude,Ship type\n"
            b"0,219000001,55.0,10.0,Tanker\n"
            b"10,219000001,55.001,10.001,Tanker\n"
            b"01/03/2018 00:00:20,219000002,55.5,11.0,Cargo\n"
        )
        result = parse_records(data, SCHEMA)
        self.assertEqual(len(result.records), 3)
        self.assertEqual(result.stats.rows_dropped, 0)
        by_mmsi = {r.mmsi: r for r in result.records if r.mmsi == 219000002}
        self.assertEqual(by_mmsi[219000002].timestamp, 1519862420.0)
        self.assertEqual(by_mmsi[219000002].ship_type, "Cargo")

    def test_out_of_range_latitude_is_dropped(self):
        data = (
            b"ts,MMSI,Latitude,Longitude,Ship type\n"
            b"0,219000001,91.0,10.0,Tanker\n"
            b"10,219000001,55.0,10.0,Tanker\n"
            b"20,219000001,55.0,10.1,Tanker\n"
        )
        result = parse_records(data, SCHEMA)
        self.assertEqual(len(result.records), 2)
        self.assertEqual(result.stats.rows_dropped, 1)

    def test_unparsable_rows_are_dropped(self):
        data = b"ts,MMSI,Latitude,Longitude,Ship type\nnot-a-time,1,55,10,\n5,1,abc,10,\n6,1,55,10,\n"
        result = parse_records(data, SCHEMA)
        self.assertEqual(len(result.records), 1)
        self.assertEqual(result.stats.rows_dropped, 2)
        self.assertIsNone(result.records[0].ship_type)

    def test_rows_with_wrong_field_count_are_dropped(self):
        data = (
            b"ts,MMSI,Latitude,Longitude\n"
            b"0,1,55,12\n"
            b"10,1,55.1,12.1,EXTRA\n"
            b"20,1,55.2\n"
            b"30,1,55.3,12.3\n"
        )
        schema = SchemaConfig.parse("timestamp=ts,mmsi=MMSI,lat=Latitude,lon=Longitude")
        result = parse_records(data, schema)
        self.assertEqual([r.timestamp for r in result.records], [0.0, 30.0])
        self.assertEqual(result.stats.rows_read, 4)
        self.assertEqual(result.stats.rows_dropped, 2)

    def test_invalid_utf8_row_is_dropped(self):
        data = b"ts,MMSI,Latitude,Longitude,Ship type\n0,1,55,10,\n10,1,5\xff\xfe,10,\n20,1,55.1,10,\n"
        result = parse_records(data, SCHEMA)
        self.assertEqual(len(result.records), 2)
        self.assertEqual(result.stats.rows_dropped, 1)

    def test_non_integer_mmsi_is_dropped(self):
        data = (
            b"ts,MMSI,Latitude,Longitude,Ship type\n"
            b"0,219000001.7,55,10,\n"
            b"10,219000001.2,55,10,\n"
            b"20,219000001,55,10,\n"
        )
        result = parse_records(data, SCHEMA)
        self.assertEqual([r.mmsi for r in result.records], [219000001])
        self.assertEqual(result.stats.rows_dropped, 2)

    def test_missing_column_is_schema_error(self):
        data = b"ts,MMSI,Latitude,Ship type\n0,1,55,Tanker\n"
        with self.assertRaises(SchemaError):
            parse_records(data, SCHEMA)

    def test_empty_input(self):
        result = parse_records(b"", SCHEMA)
        self.assertEqual(result.records, [])

    def test_explicit_time_format(self):
        schema = SchemaConfig.parse("timestamp=t,mmsi=m,lat=la,lon=lo,time_format=%Y-%m-%dT%H:%M:%S")
        result = parse_records(b"t,m,la,lo\n1970-01-01T00:01:00,5,1,2\n", schema)
        self.assertEqual(result.records[0].timestamp, 60.0)


class AssembleTests(SimpleTestCase):
    def rec(self, t, mmsi=1, lat=55.0, lon=10.0, ship_type="Tanker"):
        return AisRecord(timestamp=t, mmsi=mmsi, position=GeoPoint(lat, lon), ship_type=ship_type)

    def test_single_vessel(self):
        trajs = assemble_trajectories([self.rec(10.0 * i) for i in range(5)], gap_threshold=3600)
        self.assertEqual([len(t) for t in trajs], [5])

    def test_gap_splits(self):
        times = [0, 10, 20, 20 + 7200, 30 + 7200]
        trajs = assemble_trajectories([self.rec(t) for t in times], gap_threshold=3600)
        self.assertEqual([len(t) for t in trajs], [3, 2])

    def test_interleaved_vessels(self):
        records = [self.rec(i, mmsi=1 + i % 2) for i in range(10)]
        trajs = assemble_trajectories(reversed(records), gap_threshold=3600)
        self.assertEqual(sorted(t.mmsi for t in trajs), [1, 2])
        for t in trajs:
            self.assertTrue(all(b > a for a, b in zip(t.times, t.times[1:])))

    def test_duplicate_timestamp_keeps_first(self):
        records = [self.rec(0, lat=1.0), self.rec(0, lat=2.0), self.rec(10, lat=3.0)]
        (traj,) = assemble_trajectories(records)
        self.assertEqual([s.lat for s in traj.states], [1.0, 3.0])

    def test_single_point_segments_are_discarded(self):
        records = [self.rec(0), self.rec(10_000), self.rec(10_010)]
        trajs = assemble_trajectories(records, gap_threshold=1800)
        self.assertEqual([len(t) for t in trajs], [2])

    def test_ship_type_filter(self):
        records = [self.rec(i, ship_type="tanker") for i in range(3)] + [
            self.rec(i, mmsi=2, ship_type="Cargo") for i in range(3)
        ]
        trajs = assemble_trajectories(records, ship_type="Tanker")
        self.assertEqual([t.mmsi for t in trajs], [1])


class PolygonTests(SimpleTestCase):
    def setUp(self):
        self.unit = square("U", 0.0, 0.0)

    def test_inside_outside_and_boundary(self):
        self.assertTrue(point_in_polygon(GeoPoint(0.5, 0.5), self.unit))
        self.assertFalse(point_in_polygon(GeoPoint(2.0, 2.0), self.unit))
        self.assertTrue(point_in_polygon(GeoPoint(0.5, 0.0), self.unit))
        self.assertTrue(point_in_polygon(GeoPoint(1.0, 1.0), self.unit))

    def test_concave_polygon(self):
        # U 字型：くぼみの中は外側
        poly = Polygon(
            name="C",
            vertices=tuple(
                GeoPoint(lat, lon)
                for lat, lon in [(0, 0), (0, 3), (3, 3), (3, 2), (1, 2), (1, 1), (3, 1), (3, 0)]
            ),
        )
        self.assertFalse(point_in_polygon(GeoPoint(2.0, 1.5), poly))
        self.assertTrue(point_in_polygon(GeoPoint(2.0, 0.5), poly))

    def test_self_intersecting_ring_is_rejected(self):
        with self.assertRaises(FileFormatError):
            Polygon(name="bow", vertices=(GeoPoint(0, 0), GeoPoint(1, 1), GeoPoint(0, 1), GeoPoint(1, 0)))

    def test_polygon_file_round_trip(self):
        spec = PatternSpec(origin=square("O", 0, 0), destinations=(square("A", 5, 5), square("B", 5, -5)))
        parsed = parse_polygons(format_polygons(spec))
        self.assertEqual(parsed, spec)
        self.assertEqual(parsed.pattern_names, ["A", "B"])

    def test_malformed_polygon_file(self):
        with self.assertRaises(FileFormatError):
            parse_polygons("O\n0 0\n0 1\n1 1\n\nA\n5 5\nnot numbers\n5 6\n")
        with self.assertRaises(FileFormatError):
            parse_polygons("O\n0 0\n0 1\n1 1\n")


class MatchPatternTests(SimpleTestCase):
    def setUp(self):
        self.spec = PatternSpec(
            origin=square("O", 0.0, 0.0),
            destinations=(square("A", 0.0, 10.0), square("B", 0.0, 5.0)),
        )

    def test_origin_then_destination(self):
        self.assertEqual(match_pattern(track([(0.5, 0.5), (0.5, 3.0), (0.5, 10.5)]), self.spec), 0)

    def test_wrong_order(self):
        self.assertIsNone(match_pattern(track([(0.5, 10.5), (0.5, 3.0), (0.5, 0.5)]), self.spec))

    def test_first_destination_after_origin_wins(self):
        t = track([(0.5, 0.5), (0.5, 5.5), (0.5, 10.5)])
        self.assertEqual(match_pattern(t, self.spec), 1)

    def test_prepending_outside_states_does_not_change_label(self):
        base = [(0.5, 0.5), (0.5, 5.5), (0.5, 10.5)]
        longer = [(-20.0, -20.0), (-10.0, -10.0)] + base
        self.assertEqual(match_pattern(track(base), self.spec), match_pattern(track(longer), self.spec))

    def test_label_trajectories_keeps_matches_only(self):
        trajs = [
            track([(0.5, 0.5), (0.5, 10.5)], traj_id=0),
            track([(0.5, 10.5), (0.5, 0.5)], traj_id=1),
        ]
        labeled = label_trajectories(trajs, self.spec)
        self.assertEqual([(t.traj_id, t.label) for t in labeled], [(0, 0)])


class ResampleTests(SimpleTestCase):
    def pair(self):
        return Trajectory(
            traj_id=3,
            mmsi=1,
            times=(0.0, 900.0),
            states=(GeoPoint(0.0, 0.0), GeoPoint(0.9, 0.9)),
            label=1,
        )

    def test_knots_preserved(self):
        out = resample(self.pair(), 900)
        self.assertEqual(out.times, (0.0, 900.0))
        self.assertEqual(out.states, self.pair().states)
        self.assertEqual(out.label, 1)

    def test_midpoint(self):
        out = resample(self.pair(), 450)
        self.assertEqual(out.times, (0.0, 450.0, 900.0))
        self.assertAlmostEqual(out.states[1].lat, 0.45, places=12)
        self.assertAlmostEqual(out.states[1].lon, 0.45, places=12)

    def test_too_short(self):
        t = Trajectory(traj_id=0, mmsi=1, times=(0.0, 600.0), states=(GeoPoint(0, 0), GeoPoint(1, 1)))
        with self.assertRaises(TooShort):
            resample(t, 900)
        self.assertEqual(resample_all([t], 900), [])

    def test_global_grid_and_bracketing(self):
        rng = np.random.default_rng(5)
        times = np.cumsum(rng.uniform(5, 40, size=300)) + 1234.5
        lat = 55 + np.cumsum(rng.normal(0, 0.001, 300))
        lon = 10 + np.cumsum(rng.normal(0, 0.001, 300))
        t = Trajectory(
            traj_id=0,
            mmsi=1,
            times=tuple(times),
            states=tuple(GeoPoint(a, o) for a, o in zip(lat, lon)),
        )
        out = resample(t, 60)
        for ts, s in zip(out.times, out.states):
            self.assertEqual(ts % 60, 0.0)
            i = np.searchsorted(times, ts, side="right") - 1
            j = min(i + 1, len(times) - 1)
            self.assertTrue(min(lat[i], lat[j]) <= s.lat <= max(lat[i], lat[j]))
            self.assertTrue(min(lon[i], lon[j]) <= s.lon <= max(lon[i], lon[j]))


class TrajectoryFileTests(SimpleTestCase):
    def test_round_trip_keeps_exact_values(self):
        trajs = [
            Trajectory(traj_id=0, mmsi=7, times=(0.0, 900.0), states=(GeoPoint(55.1, 10.3), GeoPoint(55.2, 1 / 3)), label=1),
            Trajectory(traj_id=1, mmsi=8, times=(900.0, 1800.0), states=(GeoPoint(1.0, 2.0), GeoPoint(3.0, 4.0))),
        ]
        text = format_trajectories(trajs, delta_sec=900.0, pattern_names=["A", "B"])
        parsed = parse_trajectories(text)
        self.assertEqual(parsed.trajectories, trajs)
        self.assertEqual(parsed.delta_sec, 900.0)
        self.assertEqual(parsed.n_patterns, 2)
        self.assertFalse(parsed.is_labeled)

    def test_malformed_line(self):
        with self.assertRaises(FileFormatError):
            parse_trajectories("0,1,-,0.0,55.0\n")

# src/apps/pipeline/tests.py
import json
import tempfile
import unittest
from io import StringIO
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.ais.polygons import parse_polygons
from apps.ais.trajectory_io import read_trajectories
from apps.common.errors import ConfigMismatch, ShapeMismatch
from apps.nn.checkpoint import load_checkpoint
from apps.nn.params import AdamConfig
from apps.nn.schemas import ModelConfig
from apps.training.schemas import TrainConfig
from apps.windowing.sample_io import read_samples

from .management.commands.prepare import Command as PrepareCommand
from .manifest import RunManifest, read_manifest, sha256_file, write_manifest
from .services import crossval_configs, parse_origin, parse_sequence, resolve_label, run_crossval, split_train_val
from .synth import SynthConfig, generate_ais_csv, route_length, synth_polygons

FIXTURE_SCHEMA = "timestamp=t,mmsi=mmsi,lat=lat,lon=lon"

FIXTURE_POLYGONS = """\
# origin
O
0 0
0 1
1 1
1 0

A
0 4
0 5
1 5
1 4

B
4 0
4 1
5 1
5 0
"""


def fixture_csv() -> str:
    """
    3隻分（15分おき10レポート）。
    1隻目は O -> A、2隻目は O -> B、3隻目はどの箱にも入らない。読めない行が1つある。
    """
    rows = ["t,mmsi,lat,lon"]
    for k in range(10):
        t = 900 * k
        step = 4.0 * k / 9.0
        rows.append(f"{t},111,0.5,{0.5 + step}")
        rows.append(f"{t},222,{0.5 + step},0.5")
        rows.append(f"{t},333,10.0,{10.0 + 0.01 * k}")
    rows.append("900,444,abc,1.0")
    return "\n".join(rows) + "\n"


def quiet():
    return {"stdout": StringIO(), "stderr": StringIO()}


class ManifestTests(SimpleTestCase):
    def test_sha256(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "x"
            path.write_bytes(b"abc")
            self.assertEqual(sha256_file(path), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")

    def test_write_and_read(self):
        manifest = RunManifest(command="train", options={"seed": 3, "model": "mlp"}, inputs={"input": "00"}, seed=3, version="1.0.0")
        with tempfile.TemporaryDirectory() as tmp:
            path = write_manifest(Path(tmp), manifest)
            self.assertEqual(read_manifest(path), manifest)
            text = path.read_text()
            self.assertLess(text.index('"command"'), text.index('"version"'))


class SynthTests(SimpleTestCase):
    def test_same_seed_same_bytes(self):
        cfg = SynthConfig(vessels_per_route=2, seed=5)
        self.assertEqual(generate_ais_csv(cfg), generate_ais_csv(cfg))
        self.assertNotEqual(generate_ais_csv(cfg), generate_ais_csv(SynthConfig(vessels_per_route=2, seed=6)))

    def test_route_lengths(self):
        for route in ("A", "B"):
            self.assertGreater(route_length(route), 95.0)
            self.assertLess(route_length(route), 110.0)

    def test_polygons_have_two_patterns(self):
        self.assertEqual(synth_polygons().pattern_names, ["A", "B"])

    def test_faster_vessels_send_fewer_reports(self):
        slow = generate_ais_csv(SynthConfig(vessels_per_route=1, seed=2, speed_kn=12.0))
        fast = generate_ais_csv(SynthConfig(vessels_per_route=1, seed=2, speed_kn=24.0))
        self.assertLess(fast.count(b"\n"), slow.count(b"\n"))

    def test_invalid_config(self):
        with self.assertRaises(ConfigMismatch):
            SynthConfig(speed_kn=0.0)
        with self.assertRaises(ConfigMismatch):
            SynthConfig(vessels_per_route=0)

    def test_command_rejects_negative_noise(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                call_command("synth", out=tmp, vessels=1, noise_nmi=-1.0, **quiet())
        self.assertIn("code=ConfigMismatch", str(ctx.exception))


class ServiceHelperTests(SimpleTestCase):
    def test_parse_origin(self):
        self.assertIsNone(parse_origin(None))
        origin = parse_origin("55.0,10.5")
        self.assertEqual((origin.lat, origin.lon), (55.0, 10.5))
        with self.assertRaises(ConfigMismatch):
            parse_origin("55.0")

    def test_parse_sequence_inline(self):
        points = parse_sequence("55.0,10.0; 55.1,10.1")
        self.assertEqual([(p.lat, p.lon) for p in points], [(55.0, 10.0), (55.1, 10.1)])
        with self.assertRaises(ShapeMismatch):
            parse_sequence("55.0,10.0,3")

    def test_resolve_label(self):
        self.assertEqual(resolve_label("B", ("A", "B"), 2), 1)
        self.assertEqual(resolve_label("0", ("A", "B"), 2), 0)
        self.assertIsNone(resolve_label(None, ("A", "B"), 2))
        with self.assertRaises(ConfigMismatch):
            resolve_label("5", ("A", "B"), 2)
        with self.assertRaises(ConfigMismatch):
            resolve_label("C", ("A", "B"), 2)

    def test_split_train_val(self):
        train_ids, val_ids = split_train_val(range(20), 0, 0.1)
        self.assertEqual(len(val_ids), 2)
        self.assertEqual(sorted(train_ids + val_ids), list(range(20)))
        self.assertEqual(split_train_val(range(20), 0, 0.1), (train_ids, val_ids))

    def test_crossval_configs_grid(self):
        configs = crossval_configs(
            ["linear", "encdec-attn"], (False, True), ell=4, h=4, P=2, hidden=8, mlp_width=8, teacher_forcing=True
        )
        self.assertEqual([(c.model_id, c.labeled) for c in configs], [
            ("linear", False), ("linear", True), ("encdec-attn", False), ("encdec-attn", True),
        ])
        self.assertFalse(configs[0].teacher_forcing)
        self.assertTrue(configs[2].teacher_forcing)


class PrepareCommandTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        (self.tmp / "ais.csv").write_text(fixture_csv())
        (self.tmp / "polygons.txt").write_text(FIXTURE_POLYGONS)

    def tearDown(self):
        self._tmp.cleanup()

    def prepare(self, **kwargs):
        options = {
            "input": str(self.tmp / "ais.csv"),
            "schema": FIXTURE_SCHEMA,
            "polygons": str(self.tmp / "polygons.txt"),
            "out": str(self.tmp / "out"),
        }
        options.update(kwargs)
        streams = quiet()
        call_command("prepare", **options, **streams)
        return streams

    def test_fixture_gives_two_labeled_trajectories(self):
        streams = self.prepare()
        tf = read_trajectories(self.tmp / "out" / "trajectories.txt")
        self.assertEqual(len(tf.trajectories), 2)
        self.assertEqual(sorted(t.label for t in tf.trajectories), [0, 1])
        self.assertEqual(tf.pattern_names, ["A", "B"])
        self.assertEqual(tf.delta_sec, 900.0)
        out = streams["stdout"].getvalue()
        self.assertIn("pattern=A trajectories=1", out)
        self.assertIn("dropped=1", out)

    def test_ragged_and_undecodable_rows_are_counted(self):
        data = fixture_csv().encode() + b"99999,1,0.5,0.5,EXTRA\n99999,1,0.\xff\xfe,0.5\n"
        (self.tmp / "ragged.csv").write_bytes(data)
        streams = self.prepare(input=str(self.tmp / "ragged.csv"))
        self.assertIn("dropped=3", streams["stdout"].getvalue())
        tf = read_trajectories(self.tmp / "out" / "trajectories.txt")
        self.assertEqual(len(tf.trajectories), 2)

    def test_manifest_is_written(self):
        self.prepare()
        manifest = read_manifest(self.tmp / "out" / "manifest.json")
        self.assertEqual(manifest.command, "prepare")
        self.assertEqual(manifest.version, settings.SEATRACK_VERSION)
        self.assertEqual(set(manifest.inputs), {"input", "polygons"})
        self.assertEqual(manifest.options["schema"], FIXTURE_SCHEMA)
        self.assertNotIn("verbosity", manifest.options)

    def test_without_polygons_keeps_everything_unlabeled(self):
        self.prepare(polygons=None)
        tf = read_trajectories(self.tmp / "out" / "trajectories.txt")
        self.assertEqual(len(tf.trajectories), 3)
        self.assertFalse(tf.is_labeled)

    def test_empty_csv_warns_and_succeeds(self):
        (self.tmp / "empty.csv").write_bytes(b"")
        streams = self.prepare(input=str(self.tmp / "empty.csv"))
        self.assertIn("no trajectories", streams["stderr"].getvalue())
        tf = read_trajectories(self.tmp / "out" / "trajectories.txt")
        self.assertEqual(tf.trajectories, [])

    def test_malformed_polygons(self):
        (self.tmp / "bad.txt").write_text("O\n0 0\n0 1\n")
        with self.assertRaises(CommandError) as ctx:
            self.prepare(polygons=str(self.tmp / "bad.txt"))
        self.assertTrue(str(ctx.exception).startswith("code=FileFormatError"))

    def test_missing_input_file(self):
        with self.assertRaises(CommandError):
            self.prepare(input=str(self.tmp / "nope.csv"))

    def test_schema_column_missing(self):
        with self.assertRaises(CommandError) as ctx:
            self.prepare(schema="timestamp=time,mmsi=mmsi,lat=lat,lon=lon")
        self.assertIn("code=SchemaError", str(ctx.exception))

    def test_abbreviated_flags_are_rejected(self):
        parser = PrepareCommand().create_parser("manage.py", "prepare")
        args = ["--input", "a.csv", "--schema", "s", "--out", "o"]
        self.assertEqual(parser.parse_args(args).input, "a.csv")
        with self.assertRaises(CommandError):
            parser.parse_args(["--inp", "a.csv", "--schema", "s", "--out", "o"])


class SyntheticPipelineTests(SimpleTestCase):
    """小さな合成データで synth -> train -> evaluate / predict / crossval -> rerun を通す。"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.tmp = Path(cls._tmp.name)
        call_command("synth", out=str(cls.tmp / "data"), vessels=3, seed=1, **quiet())
        cls.trajectories = cls.tmp / "data" / "trajectories.txt"

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def train(self, out, **kwargs):
        options = {"input": str(self.trajectories), "out": str(self.tmp / out), "epochs": 2, "patience": 1}
        options.update(kwargs)
        call_command("train", **options, **quiet())
        return self.tmp / out

    def sequence(self, n=12):
        traj = read_trajectories(self.trajectories).trajectories[0]
        return ";".join(f"{s.lat!r},{s.lon!r}" for s in traj.states[:n])

    def test_synth_files(self):
        data = self.tmp / "data"
        for name in ("ais.csv", "schema.txt", "polygons.txt", "trajectories.txt", "manifest.json"):
            self.assertTrue((data / name).exists(), name)
        tf = read_trajectories(self.trajectories)
        self.assertEqual(len(tf.trajectories), 6)
        self.assertTrue(tf.is_labeled)
        self.assertEqual(sorted(t.label for t in tf.trajectories), [0, 0, 0, 1, 1, 1])
        self.assertEqual(parse_polygons((data / "polygons.txt").read_text()).pattern_names, ["A", "B"])

    def test_prepare_reads_synth_output(self):
        data = self.tmp / "data"
        call_command(
            "prepare",
            input=str(data / "ais.csv"),
            schema=str(data / "schema.txt"),
            polygons=str(data / "polygons.txt"),
            out=str(self.tmp / "prepared"),
            **quiet(),
        )
        self.assertEqual(
            (self.tmp / "prepared" / "trajectories.txt").read_bytes(), self.trajectories.read_bytes()
        )

    def test_window_command(self):
        call_command("window", input=str(self.trajectories), labeled=True, out=str(self.tmp / "win"), **quiet())
        header = json.loads((self.tmp / "win" / "windows.txt").read_text().splitlines()[1])
        self.assertEqual((header["ell"], header["h"], header["P"]), (12, 12, 2))
        self.assertGreater(header["count"], 0)
        loaded = read_samples(self.tmp / "win" / "windows.txt")
        self.assertEqual(len(loaded.samples), header["count"])
        self.assertTrue(all(s.psi is not None and len(s.psi) == 2 for s in loaded.samples))

    def test_train_writes_checkpoint_and_report(self):
        out = self.train("linear", model="linear")
        ckpt = load_checkpoint(out / "model.ckpt")
        self.assertEqual(ModelConfig.from_dict(ckpt.model).model_id, "linear")
        self.assertEqual(ckpt.version, settings.SEATRACK_VERSION)
        report = json.loads((out / "train_report.json").read_text())
        self.assertEqual(report["train"]["epochs_run"], 1)
        self.assertNotIn("wall_time", report["train"])

    def test_train_is_reproducible(self):
        a = self.train("mlp_a", model="mlp", seed=4)
        b = self.train("mlp_b", model="mlp", seed=4)
        self.assertEqual((a / "model.ckpt").read_bytes(), (b / "model.ckpt").read_bytes())
        self.assertEqual((a / "train_report.json").read_bytes(), (b / "train_report.json").read_bytes())

    def test_predict_returns_h_rows(self):
        out = self.train("linear_pred", model="linear")
        stdout = StringIO()
        call_command("predict", checkpoint=str(out / "model.ckpt"), sequence=self.sequence(), stdout=stdout)
        rows = [line for line in stdout.getvalue().splitlines() if not line.startswith("#")]
        self.assertEqual(len(rows), 12)
        self.assertEqual([int(r.split()[0]) for r in rows], list(range(1, 13)))

    def test_predict_writes_attention_for_attn(self):
        out = self.train("attn", model="encdec", agg="attn", labeled=True, hidden=4)
        call_command(
            "predict",
            checkpoint=str(out / "model.ckpt"),
            sequence=self.sequence(15),
            label="B",
            out=str(self.tmp / "pred"),
            **quiet(),
        )
        rows = (self.tmp / "pred" / "attention.txt").read_text().splitlines()[1:]
        self.assertEqual(len(rows), 12)
        for row in rows:
            weights = np.array([float(v) for v in row.split()])
            self.assertEqual(weights.size, 12)
            self.assertAlmostEqual(float(weights.sum()), 1.0, places=4)

    def test_labeled_checkpoint_needs_label(self):
        out = self.train("mlp_labeled", model="mlp", labeled=True)
        with self.assertRaises(CommandError) as ctx:
            call_command("predict", checkpoint=str(out / "model.ckpt"), sequence=self.sequence(), **quiet())
        self.assertIn("code=ConfigMismatch", str(ctx.exception))

    def test_short_sequence(self):
        out = self.train("linear_short", model="linear")
        with self.assertRaises(CommandError) as ctx:
            call_command("predict", checkpoint=str(out / "model.ckpt"), sequence=self.sequence(5), **quiet())
        self.assertIn("code=ShapeMismatch", str(ctx.exception))

    def test_labeled_training_on_unlabeled_file_is_rejected(self):
        call_command(
            "prepare",
            input=str(self.tmp / "data" / "ais.csv"),
            schema=str(self.tmp / "data" / "schema.txt"),
            out=str(self.tmp / "unlabeled"),
            **quiet(),
        )
        with self.assertRaises(CommandError) as ctx:
            self.train("bad", model="mlp", labeled=True, input=str(self.tmp / "unlabeled" / "trajectories.txt"))
        self.assertIn("code=ConfigMismatch", str(ctx.exception))
        self.assertFalse((self.tmp / "bad" / "model.ckpt").exists())

    def test_unknown_aggregation(self):
        with self.assertRaises(CommandError) as ctx:
            self.train("bad_agg", model="encdec", agg="sum")
        self.assertIn("code=ConfigMismatch", str(ctx.exception))

    def test_evaluate_writes_reports(self):
        out = self.train("linear_eval", model="linear", labeled=True)
        call_command(
            "evaluate",
            checkpoint=str(out / "model.ckpt"),
            input=str(self.trajectories),
            per_route=True,
            out=str(self.tmp / "eval"),
            **quiet(),
        )
        for name in ("report.txt", "report.kv", "cdf.dat", "mae_vs_distance.dat", "manifest.json"):
            self.assertTrue((self.tmp / "eval" / name).exists(), name)
        kv = (self.tmp / "eval" / "report.kv").read_text()
        self.assertIn("model=linear labeled=1 fold=-", kv)
        self.assertIn("route=A", kv)

    def test_evaluate_unknown_format(self):
        out = self.train("linear_fmt", model="linear")
        with self.assertRaises(CommandError) as ctx:
            call_command(
                "evaluate",
                checkpoint=str(out / "model.ckpt"),
                input=str(self.trajectories),
                format="html",
                out=str(self.tmp / "eval_html"),
                **quiet(),
            )
        self.assertIn("code=UnsupportedFormat", str(ctx.exception))

    def crossval(self, out):
        call_command(
            "crossval",
            input=str(self.trajectories),
            models="linear,mlp",
            folds=2,
            epochs=2,
            patience=1,
            out=str(self.tmp / out),
            **quiet(),
        )
        return self.tmp / out

    def test_crossval_table_has_all_models(self):
        out = self.crossval("cv")
        table = (out / "report.txt").read_text()
        rows = [line.split()[0] for line in table.splitlines()[2:] if not line.startswith(("#", "-"))]
        self.assertEqual(rows, ["linear", "mlp"])
        kv = (out / "report.kv").read_text()
        self.assertIn("model=mlp labeled=1 fold=mean", kv)
        self.assertNotIn("failed=", kv)

    def test_rerun_reproduces_outputs_bitwise(self):
        first = self.crossval("cv_first")
        call_command("rerun", manifest=str(first / "manifest.json"), out=str(self.tmp / "cv_again"), **quiet())
        again = self.tmp / "cv_again"
        for name in ("report.txt", "report.kv", "cdf.dat", "mae_vs_distance.dat", "train_reports.json"):
            self.assertEqual((first / name).read_bytes(), (again / name).read_bytes(), name)
        self.assertEqual(read_manifest(again / "manifest.json").command, "crossval")

    def test_rerun_refuses_changed_input(self):
        data = self.tmp / "data_copy"
        data.mkdir()
        (data / "trajectories.txt").write_bytes(self.trajectories.read_bytes())
        self.train("to_change", model="linear", input=str(data / "trajectories.txt"))
        (data / "trajectories.txt").write_text("")
        with self.assertRaises(CommandError) as ctx:
            call_command(
                "rerun", manifest=str(self.tmp / "to_change" / "manifest.json"), out=str(self.tmp / "x"), **quiet()
            )
        self.assertIn("code=ConfigMismatch", str(ctx.exception))


@unittest.skipUnless(settings.SEATRACK_SLOW_TESTS, "set SEATRACK_SLOW_TESTS=true to run the synthetic experiment")
class SyntheticExperimentTests(SimpleTestCase):
    """
    2航路の合成データでの比較実験（数十分かかる）。

    - ラベル付き EncDec-ATTN の最終ステップ MAE はラベル無しの 0.7 倍以下
    - ラベル無しの 3h MAE は EncDec-ATTN ≤ MLP×1.05、MLP ≤ Linear×1.05
    - ラベル付きの誤差 CDF はほぼどこでもラベル無しより上
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        tmp = Path(cls._tmp.name)
        call_command("synth", out=str(tmp), vessels=60, seed=0, **quiet())
        tf = read_trajectories(tmp / "trajectories.txt")
        configs = crossval_configs(
            ["linear", "mlp", "encdec-attn"], (False, True), ell=12, h=12, P=2, hidden=32, mlp_width=512, teacher_forcing=False
        )
        cfg = TrainConfig(max_epochs=400, batch_size=200, adam=AdamConfig(lr=1e-3), patience=30, seed=0)
        cls.result, cls.bundle = run_crossval(tf, configs, cfg, K=2, val_fraction=0.1, origin=None)

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def test_no_failures(self):
        self.assertEqual(self.result.failures, [])

    def test_labels_help_at_the_branch(self):
        unlabeled = self.bundle.mean_mae("encdec-attn", False)[-1]
        labeled = self.bundle.mean_mae("encdec-attn", True)[-1]
        self.assertLessEqual(labeled, 0.7 * unlabeled)

    def test_model_ordering(self):
        linear = self.bundle.mean_mae("linear", False)[-1]
        mlp = self.bundle.mean_mae("mlp", False)[-1]
        attn = self.bundle.mean_mae("encdec-attn", False)[-1]
        self.assertLessEqual(attn, mlp * 1.05)
        self.assertLessEqual(mlp, linear * 1.05)

    def test_labeled_cdf_dominates(self):
        def pooled(labeled):
            return np.sort(np.concatenate([r.final_errors for r in self.bundle.select("encdec-attn", labeled)]))

        lab, unl = pooled(True), pooled(False)
        xs = np.union1d(lab, unl)
        f_lab = np.searchsorted(lab, xs, side="right") / lab.size
        f_unl = np.searchsorted(unl, xs, side="right") / unl.size
        violated = np.mean(f_lab < f_unl)
        self.assertLessEqual(violated, 0.05)

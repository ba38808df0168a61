# src/apps/nn/tests.py
import numpy as np
from django.test import SimpleTestCase

from apps.common.errors import ConfigMismatch, FileFormatError, ShapeMismatch

from .checkpoint import decode_checkpoint, encode_checkpoint
from .gradcheck import finite_difference_gradient, relative_error
from .initializers import init_he, init_orthogonal, init_xavier
from .losses import mae_loss, mse_loss
from .ops import add_bias, affine, concat_rows, elementwise, hadamard, matmul, sigmoid, softmax, transpose
from .params import AdamConfig, ParamStore, adam_step
from .rng import make_rng
from .schemas import ModelConfig


class OpsTests(SimpleTestCase):
    def test_activations_at_zero(self):
        self.assertEqual(float(sigmoid(np.array([0.0]))[0]), 0.5)
        self.assertEqual(float(elementwise("tanh", np.array([0.0]))[0]), 0.0)
        np.testing.assert_array_equal(elementwise("relu", np.array([-1.0, 2.0])), [0.0, 2.0])

    def test_sigmoid_is_stable_for_large_inputs(self):
        with np.errstate(over="raise"):
            out = sigmoid(np.array([-1000.0, 1000.0]))
        np.testing.assert_array_equal(out, [0.0, 1.0])

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))
        with self.assertRaises(ShapeMismatch):
            hadamard(np.zeros(2), np.zeros(3))
        with self.assertRaises(ShapeMismatch):
            affine(np.zeros((1, 3)), np.zeros((2, 2)), np.zeros(2))
        with self.assertRaises(ShapeMismatch):
            concat_rows(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_add_bias_broadcasts_over_rows(self):
        out = add_bias(np.zeros((3, 2)), np.array([1.0, -2.0]))
        np.testing.assert_array_equal(out, [[1.0, -2.0]] * 3)
        with self.assertRaises(ShapeMismatch):
            add_bias(np.zeros((3, 2)), np.zeros(3))
        with self.assertRaises(ShapeMismatch):
            add_bias(np.zeros((3, 2)), np.zeros((1, 2)))

    def test_concat_and_transpose(self):
        a = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(transpose(a), a.T)
        self.assertEqual(concat_rows(a, a).shape, (2, 6))


class SoftmaxTests(SimpleTestCase):
    def test_uniform(self):
        np.testing.assert_array_equal(softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_no_overflow(self):
        out = softmax(np.array([1000.0, 0.0]))
        self.assertTrue(np.all(np.isfinite(out)))
        self.assertAlmostEqual(out[0], 1.0, places=12)
        self.assertLess(out[1], 1e-300)

    def test_matches_direct_formula(self):
        v = np.array([1.0, 2.0, 3.0])
        direct = np.exp(v.astype(np.longdouble)) / np.exp(v.astype(np.longdouble)).sum()
        np.testing.assert_allclose(softmax(v), direct.astype(np.float64), atol=1e-12)

    def test_sums_to_one_and_shift_invariant(self):
        rng = make_rng(1)
        for _ in range(100):
            v = rng.normal(0, 5, size=7)
            s = softmax(v)
            self.assertLess(abs(s.sum() - 1.0), 1e-12)
            np.testing.assert_allclose(softmax(v + 123.4), s, atol=1e-12)


class InitializerTests(SimpleTestCase):
    def test_orthogonal_square(self):
        q = init_orthogonal((8, 8), 3)
        self.assertLess(np.max(np.abs(q.T @ q - np.eye(8))), 1e-10)

    def test_orthogonal_rectangular(self):
        tall = init_orthogonal((8, 3), 3)
        wide = init_orthogonal((3, 8), 3)
        self.assertLess(np.max(np.abs(tall.T @ tall - np.eye(3))), 1e-10)
        self.assertLess(np.max(np.abs(wide @ wide.T - np.eye(3))), 1e-10)

    def test_xavier_support(self):
        w = init_xavier((4, 4), 0)
        self.assertTrue(np.all(np.abs(w) <= np.sqrt(6.0 / 8.0)))

    def test_he_std(self):
        w = init_he((1000, 100), 0)
        self.assertLess(abs(w.std() - np.sqrt(2.0 / 100)) / np.sqrt(2.0 / 100), 0.1)

    def test_same_seed_same_bits(self):
        np.testing.assert_array_equal(init_xavier((5, 7), 42), init_xavier((5, 7), 42))
        np.testing.assert_array_equal(init_orthogonal((6, 6), 42), init_orthogonal((6, 6), 42))
        np.testing.assert_array_equal(
            make_rng(3, "fold", 1).normal(size=4), make_rng(3, "fold", 1).normal(size=4)
        )


class AdamTests(SimpleTestCase):
    def store(self, value):
        p = ParamStore()
        p.add("w", np.array([value]))
        return p

    def test_first_step_closed_form(self):
        p = self.store(1.0)
        p.grad("w")[...] = 0.3
        adam_step(p, 1, AdamConfig(lr=0.1))
        self.assertAlmostEqual(1.0 - p["w"][0], 0.1 * 0.3 / (0.3 + 1e-8), places=12)
        self.assertEqual(p.grad("w")[0], 0.0)

    def test_zero_gradient_leaves_params(self):
        p = self.store(2.5)
        adam_step(p, 1, AdamConfig(lr=0.1))
        self.assertEqual(p["w"][0], 2.5)

    def test_deterministic(self):
        a, b = self.store(1.0), self.store(1.0)
        for t in range(1, 4):
            a.grad("w")[...] = 0.2 * t
            b.grad("w")[...] = 0.2 * t
            adam_step(a, t, AdamConfig())
            adam_step(b, t, AdamConfig())
        self.assertEqual(a["w"].tobytes(), b["w"].tobytes())

    def test_config_validation(self):
        with self.assertRaises(ValueError):
            AdamConfig(lr=-1.0)
        with self.assertRaises(ValueError):
            AdamConfig(beta1=1.0)
        with self.assertRaises(ValueError):
            AdamConfig(epsilon=0.0)


class LossTests(SimpleTestCase):
    def test_zero_loss(self):
        y = np.ones((3, 2))
        loss, grad = mae_loss(y, y)
        self.assertEqual(loss, 0.0)
        np.testing.assert_array_equal(grad, np.zeros((3, 2)))

    def test_unit_offset(self):
        loss, grad = mae_loss(np.ones((3, 2)) + 1.0, np.ones((3, 2)))
        self.assertEqual(loss, 1.0)
        np.testing.assert_allclose(grad, np.full((3, 2), 1.0 / 6.0))

    def test_gradients_match_finite_differences(self):
        rng = make_rng(9)
        target = rng.normal(size=(3, 2))
        for loss_fn in (mae_loss, mse_loss):
            p = ParamStore()
            p.add("pred", rng.normal(size=(3, 2)))
            _, analytic = loss_fn(p["pred"], target)
            numeric = finite_difference_gradient(lambda s: loss_fn(s["pred"], target)[0], p)
            np.testing.assert_allclose(analytic, numeric["pred"], atol=1e-6)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            mae_loss(np.zeros((2, 2)), np.zeros((2, 3)))


class FiniteDifferenceTests(SimpleTestCase):
    def test_sum(self):
        p = ParamStore()
        p.add("a", np.arange(6.0).reshape(2, 3))
        g = finite_difference_gradient(lambda s: float(s["a"].sum()), p)
        np.testing.assert_allclose(g["a"], np.ones((2, 3)), atol=1e-8)

    def test_quadratic(self):
        p = ParamStore()
        p.add("a", np.array([0.5, -1.5, 2.0]))
        before = p["a"].copy()
        g = finite_difference_gradient(lambda s: 0.5 * float(np.sum(s["a"] ** 2)), p)
        np.testing.assert_allclose(g["a"], before, atol=1e-8)
        np.testing.assert_array_equal(p["a"], before)

    def test_relative_error_floor(self):
        self.assertEqual(relative_error(np.zeros(3), np.zeros(3)), 0.0)


class ParamStoreTests(SimpleTestCase):
    def test_load_is_in_place(self):
        p = ParamStore()
        ref = p.add("w", np.zeros((2, 2)))
        p.load({"w": np.ones((2, 2))})
        self.assertIs(ref, p["w"])
        np.testing.assert_array_equal(ref, np.ones((2, 2)))

    def test_duplicate_name(self):
        p = ParamStore()
        p.add("w", np.zeros(1))
        with self.assertRaises(ValueError):
            p.add("w", np.zeros(1))

    def test_load_shape_mismatch(self):
        p = ParamStore()
        p.add("w", np.zeros((2, 2)))
        with self.assertRaises(ShapeMismatch):
            p.load({"w": np.zeros(3)})


class CheckpointTests(SimpleTestCase):
    def test_encode_decode(self):
        p = ParamStore()
        p.add("enc.W", make_rng(0).normal(size=(3, 4)))
        p.add("b", np.array([1.0, -2.0]))
        blob = encode_checkpoint(
            p,
            model={"kind": "mlp"},
            standardizer={"mean": [1.0, 2.0], "std": [0.5, 0.25]},
            adam=AdamConfig(lr=1e-3),
            step=17,
            version="test",
        )
        self.assertEqual(
            blob,
            encode_checkpoint(
                p,
                model={"kind": "mlp"},
                standardizer={"mean": [1.0, 2.0], "std": [0.5, 0.25]},
                adam=AdamConfig(lr=1e-3),
                step=17,
                version="test",
            ),
        )
        ckpt = decode_checkpoint(blob)
        self.assertEqual(ckpt.step, 17)
        self.assertEqual(ckpt.adam.lr, 1e-3)
        self.assertEqual(list(ckpt.arrays), ["enc.W", "b"])
        np.testing.assert_array_equal(ckpt.arrays["enc.W"], p["enc.W"])

    def test_bad_magic(self):
        with self.assertRaises(FileFormatError):
            decode_checkpoint(b"nope")


class ModelConfigTests(SimpleTestCase):
    def test_encdec_requires_aggregation(self):
        with self.assertRaises(ConfigMismatch):
            ModelConfig(kind="encdec", ell=4, h=3)

    def test_labeled_requires_patterns(self):
        with self.assertRaises(ConfigMismatch):
            ModelConfig(kind="mlp", ell=4, h=3, labeled=True, P=0)

    def test_round_trip_and_id(self):
        cfg = ModelConfig(kind="encdec", ell=4, h=3, P=2, labeled=True, aggregation="attn", hidden=3)
        self.assertEqual(ModelConfig.from_dict(cfg.to_dict()), cfg)
        self.assertEqual(cfg.model_id, "encdec-attn")
        self.assertEqual(cfg.psi_dim, 2)

# src/apps/baselines/tests.py
import numpy as np
from django.test import SimpleTestCase

from apps.common.errors import ConfigMismatch, ShapeMismatch
from apps.nn.gradcheck import finite_difference_gradient, max_relative_error, relative_errors
from apps.nn.rng import make_rng
from apps.nn.schemas import ModelConfig

from .services import RIDGE, LinearModel, MlpModel, input_width


def linear(ell=3, h=2, *, labeled=False, P=2):
    return LinearModel(ModelConfig(kind="linear", ell=ell, h=h, P=P, labeled=labeled))


def mlp(ell=3, h=2, *, labeled=False, P=2, width=8, seed=0):
    return MlpModel(ModelConfig(kind="mlp", ell=ell, h=h, P=P, labeled=labeled, mlp_width=width), seed=seed)


class LinearFitTests(SimpleTestCase):
    def setUp(self):
        self.rng = make_rng(21)

    def test_affine_targets_are_reproduced(self):
        model = linear()
        X = self.rng.normal(size=(50, 3, 2))
        W = self.rng.normal(size=(4, 6))
        b = self.rng.normal(size=4)
        Y = (X.reshape(50, -1) @ W.T + b).reshape(50, 2, 2)
        model.fit(X, Y)
        self.assertLess(np.max(np.abs(model.predict(X) - Y)), 1e-8)

    def test_constant_targets(self):
        model = linear()
        X = self.rng.normal(size=(40, 3, 2))
        Y = np.tile(np.array([[1.5, -2.0], [0.25, 3.0]]), (40, 1, 1))
        model.fit(X, Y)
        np.testing.assert_allclose(model.params["linear.W"], 0.0, atol=1e-6)
        np.testing.assert_allclose(model.params["linear.b"], Y[0].reshape(-1), atol=1e-6)

    def test_matches_independent_least_squares(self):
        model = linear()
        X = self.rng.normal(size=(50, 3, 2))
        Y = self.rng.normal(size=(50, 2, 2))
        model.fit(X, Y)

        A = np.concatenate([X.reshape(50, -1), np.ones((50, 1))], axis=1)
        coef, *_ = np.linalg.lstsq(A, Y.reshape(50, -1), rcond=None)
        np.testing.assert_allclose(model.params["linear.W"], coef[:-1].T, atol=1e-6)
        np.testing.assert_allclose(model.params["linear.b"], coef[-1], atol=1e-6)

    def test_labeled_descriptor_shifts_prediction(self):
        model = linear(labeled=True)
        X = self.rng.normal(size=(60, 3, 2))
        labels = self.rng.integers(0, 2, size=60)
        psi = np.eye(2)[labels]
        # ルートごとに一定のずれがあるターゲット
        Y = X[:, -2:, :] + np.where(labels == 1, 1.0, -1.0)[:, None, None]
        model.fit(X, Y, psi)
        self.assertLess(np.max(np.abs(model.predict(X, psi) - Y)), 1e-5)

    def test_fit_is_a_minimum(self):
        model = linear()
        X = self.rng.normal(size=(30, 3, 2))
        Y = self.rng.normal(size=(30, 2, 2))
        model.fit(X, Y)

        def damped(W, b):
            r = X.reshape(30, -1) @ W.T + b - Y.reshape(30, -1)
            return np.sum(r * r) + RIDGE * (np.sum(W * W) + np.sum(b * b))

        W0, b0 = model.params["linear.W"].copy(), model.params["linear.b"].copy()
        best = damped(W0, b0)
        for _ in range(50):
            dW = self.rng.normal(0.0, 1e-3, size=W0.shape)
            db = self.rng.normal(0.0, 1e-3, size=b0.shape)
            self.assertGreaterEqual(damped(W0 + dW, b0 + db), best)

    def test_underdetermined_still_solves(self):
        model = linear()
        X = self.rng.normal(size=(2, 3, 2))
        model.fit(X, self.rng.normal(size=(2, 2, 2)))
        self.assertTrue(model.params.all_finite())


class LinearPredictTests(SimpleTestCase):
    def test_identity_weights_copy_input(self):
        model = linear(ell=2, h=2)
        model.params["linear.W"][...] = np.eye(4)
        X = make_rng(1).normal(size=(3, 2, 2))
        np.testing.assert_array_equal(model.predict(X), X)

    def test_zero_weights_give_bias(self):
        model = linear()
        model.params["linear.b"][...] = [1.0, 2.0, 3.0, 4.0]
        out = model.predict(np.ones((1, 3, 2)))
        np.testing.assert_array_equal(out[0], [[1.0, 2.0], [3.0, 4.0]])

    def test_random_matches_matrix_product(self):
        rng = make_rng(2)
        model = linear()
        model.params["linear.W"][...] = rng.normal(size=(4, 6))
        model.params["linear.b"][...] = rng.normal(size=4)
        X = rng.normal(size=(5, 3, 2))
        expected = X.reshape(5, 6) @ model.params["linear.W"].T + model.params["linear.b"]
        np.testing.assert_allclose(model.predict(X).reshape(5, 4), expected, atol=1e-14)

    def test_shape_and_descriptor_errors(self):
        with self.assertRaises(ShapeMismatch):
            linear().predict(np.zeros((1, 4, 2)))
        with self.assertRaises(ConfigMismatch):
            linear(labeled=True).predict(np.zeros((1, 3, 2)))


class MlpTests(SimpleTestCase):
    def test_zero_weights_give_head_bias(self):
        model = mlp()
        for name in model.params:
            model.params[name][...] = 0.0
        model.params["mlp.b3"][...] = [0.5, -0.5, 1.0, 2.0]
        out = model.predict(make_rng(3).normal(size=(2, 3, 2)))
        np.testing.assert_array_equal(out, np.tile([[0.5, -0.5], [1.0, 2.0]], (2, 1, 1)))

    def test_dead_relu_ignores_input(self):
        model = mlp()
        model.params["mlp.b1"][...] = -1e3
        rng = make_rng(4)
        a = model.predict(rng.normal(size=(1, 3, 2)))
        b = model.predict(rng.normal(size=(1, 3, 2)))
        np.testing.assert_array_equal(a, b)

    def test_input_width(self):
        self.assertEqual(mlp(labeled=True).params["mlp.W1"].shape, (8, 3 * 2 + 2))
        self.assertEqual(mlp().params["mlp.W1"].shape, (8, 6))
        self.assertEqual(input_width(mlp(labeled=True).config), 8)

    def test_default_width(self):
        model = MlpModel(ModelConfig(kind="mlp", ell=12, h=12))
        self.assertEqual(model.params["mlp.W2"].shape, (512, 512))
        self.assertEqual(model.params["mlp.W3"].shape, (24, 512))

    def test_gradient_check(self):
        for labeled in (False, True):
            with self.subTest(labeled=labeled):
                model = mlp(labeled=labeled, seed=5)
                rng = make_rng(6, int(labeled))
                X = rng.normal(size=(4, 3, 2))
                psi = np.eye(2)[[0, 1, 1, 0]] if labeled else None
                R = rng.normal(size=(4, 2, 2))

                def loss(_params):
                    return float(np.sum(R * model.predict(X, psi)))

                model.params.zero_grad()
                _, cache = model.forward(X, psi)
                model.backward(cache, R)
                analytic = {n: model.params.grad(n).copy() for n in model.params}
                numeric = finite_difference_gradient(loss, model.params)
                for name, err in relative_errors(analytic, numeric).items():
                    self.assertLess(err, 1e-5, name)

    def test_linear_backward_matches_finite_differences(self):
        model = linear(labeled=True)
        rng = make_rng(7)
        model.params["linear.W"][...] = rng.normal(size=(4, 8))
        X = rng.normal(size=(3, 3, 2))
        psi = np.eye(2)[[0, 1, 0]]
        R = rng.normal(size=(3, 2, 2))
        _, cache = model.forward(X, psi)
        model.backward(cache, R)
        analytic = {n: model.params.grad(n).copy() for n in model.params}
        numeric = finite_difference_gradient(lambda _p: float(np.sum(R * model.predict(X, psi))), model.params)
        self.assertLess(max_relative_error(analytic, numeric), 1e-5)

# src/apps/seq2seq/tests.py
import numpy as np
from django.test import SimpleTestCase

from apps.common.errors import ConfigMismatch, ShapeMismatch
from apps.nn.gradcheck import finite_difference_gradient, max_relative_error, relative_errors
from apps.nn.losses import mae_loss
from apps.nn.params import AdamConfig, ParamStore, adam_step
from apps.nn.rng import make_rng
from apps.nn.schemas import ModelConfig

from .lstm import lstm_cell_backward, lstm_cell_forward
from .schemas import GATES, LstmCell
from .services import (
    EncDecModel,
    aggregate_avg,
    aggregate_max,
    attention_context,
    bilstm_encode,
    decode_sequence,
    decoder_init,
)


def make_model(aggregation="attn", *, labeled=False, q=3, ell=4, h=3, P=2, teacher_forcing=False, seed=0):
    cfg = ModelConfig(
        kind="encdec",
        ell=ell,
        h=h,
        P=P,
        labeled=labeled,
        aggregation=aggregation,
        hidden=q,
        teacher_forcing=teacher_forcing,
    )
    return EncDecModel(cfg, seed=seed)


def zero_all(params):
    for name in params:
        params[name][...] = 0.0


def sig(a):
    return 1.0 / (1.0 + np.exp(-a))


def reference_cell(params, prefix, x, h, c):
    """列ベクトル規約でそのまま書いた1ステップ（1サンプル）。"""
    def gate(g, act):
        return act(params[f"{prefix}.U_{g}"] @ x + params[f"{prefix}.W_{g}"] @ h + params[f"{prefix}.b_{g}"])

    i, f, o = gate("i", sig), gate("f", sig), gate("o", sig)
    g = gate("c", np.tanh)
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


class LstmCellTests(SimpleTestCase):
    def setUp(self):
        self.rng = make_rng(11)

    def build(self, m, q):
        cell = LstmCell("cell", m, q)
        params = ParamStore()
        cell.register(params, self.rng)
        return cell, params

    def test_initial_biases(self):
        cell, params = self.build(2, 3)
        np.testing.assert_array_equal(params["cell.b_f"], np.ones(3))
        for g in ("i", "o", "c"):
            np.testing.assert_array_equal(params[f"cell.b_{g}"], np.zeros(3))

    def test_zero_params_fixed_point(self):
        cell, params = self.build(2, 3)
        zero_all(params)
        h, c, _ = lstm_cell_forward(cell, params, self.rng.normal(size=(1, 2)), np.zeros((1, 3)), np.zeros((1, 3)))
        np.testing.assert_array_equal(h, np.zeros((1, 3)))
        np.testing.assert_array_equal(c, np.zeros((1, 3)))

    def test_saturated_gates_hand_case(self):
        cell, params = self.build(1, 1)
        zero_all(params)
        params["cell.b_i"][...] = 50.0
        params["cell.b_o"][...] = 50.0
        params["cell.b_f"][...] = 50.0
        h, c, _ = lstm_cell_forward(cell, params, np.array([[0.3]]), np.zeros((1, 1)), np.ones((1, 1)))
        self.assertAlmostEqual(float(c[0, 0]), 1.0, places=12)
        self.assertAlmostEqual(float(h[0, 0]), np.tanh(1.0), places=12)
        self.assertAlmostEqual(float(h[0, 0]), 0.7616, places=4)

    def test_shape_mismatch(self):
        cell, params = self.build(2, 3)
        with self.assertRaises(ShapeMismatch):
            lstm_cell_forward(cell, params, np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 3)))

    def test_backward_matches_finite_differences(self):
        cell, params = self.build(2, 3)
        x = self.rng.normal(size=(2, 2))
        h0 = self.rng.normal(size=(2, 3)) * 0.5
        c0 = self.rng.normal(size=(2, 3)) * 0.5
        Rh = self.rng.normal(size=(2, 3))
        Rc = self.rng.normal(size=(2, 3))

        def loss(p):
            h, c, _ = lstm_cell_forward(cell, p, x, h0, c0)
            return float(np.sum(Rh * h) + np.sum(Rc * c))

        _, _, cache = lstm_cell_forward(cell, params, x, h0, c0)
        lstm_cell_backward(cell, params, cache, Rh, Rc)
        analytic = {n: params.grad(n).copy() for n in params}
        numeric = finite_difference_gradient(loss, params)
        for name, err in relative_errors(analytic, numeric).items():
            self.assertLess(err, 1e-5, name)


class EncoderTests(SimpleTestCase):
    def test_single_step(self):
        model = make_model("avg", ell=1)
        X = make_rng(1).normal(size=(1, 1, 2))
        enc = bilstm_encode(model, X)
        self.assertEqual(enc.H.shape, (1, 1, 6))
        h_f, _ = reference_cell(model.params, "enc_fwd", X[0, 0], np.zeros(3), np.zeros(3))
        h_b, _ = reference_cell(model.params, "enc_bwd", X[0, 0], np.zeros(3), np.zeros(3))
        np.testing.assert_allclose(enc.H[0, 0], np.concatenate([h_f, h_b]), atol=1e-14)

    def test_reversal_swaps_directions(self):
        model = make_model("avg", q=2)
        for g in GATES:
            for kind in ("U", "W", "b"):
                model.params[f"enc_bwd.{kind}_{g}"][...] = model.params[f"enc_fwd.{kind}_{g}"]
        X = make_rng(2).normal(size=(2, 4, 2))
        H = bilstm_encode(model, X).H
        H_rev = bilstm_encode(model, X[:, ::-1, :].copy()).H
        np.testing.assert_allclose(H_rev[:, ::-1, :2], H[:, :, 2:], atol=1e-14)

    def test_matches_straight_line_reference(self):
        model = make_model("max", q=2, ell=3)
        X = make_rng(3).normal(size=(1, 3, 2))
        enc = bilstm_encode(model, X)

        hf, cf = np.zeros(2), np.zeros(2)
        fwd = []
        for t in range(3):
            hf, cf = reference_cell(model.params, "enc_fwd", X[0, t], hf, cf)
            fwd.append(hf)
        hb, cb = np.zeros(2), np.zeros(2)
        bwd = [None] * 3
        for t in (2, 1, 0):
            hb, cb = reference_cell(model.params, "enc_bwd", X[0, t], hb, cb)
            bwd[t] = hb

        for t in range(3):
            np.testing.assert_allclose(enc.H[0, t], np.concatenate([fwd[t], bwd[t]]), atol=1e-14)
        np.testing.assert_allclose(enc.h_last[0], fwd[-1], atol=1e-14)


class AggregationTests(SimpleTestCase):
    def test_hand_example(self):
        # 隠れユニット×時刻で [[1,3],[4,2]]。こちらの配列は時刻が先
        H = np.array([[1.0, 3.0], [4.0, 2.0]]).T[None]
        np.testing.assert_array_equal(aggregate_max(H)[0], [3.0, 4.0])
        np.testing.assert_array_equal(aggregate_avg(H)[0], [2.0, 3.0])

    def test_single_step_is_identity(self):
        H = make_rng(4).normal(size=(1, 1, 6))
        np.testing.assert_array_equal(aggregate_max(H), H[:, 0])
        np.testing.assert_array_equal(aggregate_avg(H), H[:, 0])

    def test_time_permutation_invariance(self):
        H = make_rng(5).normal(size=(2, 5, 4))
        perm = np.array([3, 0, 4, 1, 2])
        np.testing.assert_array_equal(aggregate_max(H[:, perm]), aggregate_max(H))
        np.testing.assert_allclose(aggregate_avg(H[:, perm]), aggregate_avg(H), atol=1e-15)


class AttentionTests(SimpleTestCase):
    def setUp(self):
        self.model = make_model("attn", q=3)
        self.rng = make_rng(6)

    def test_single_step_weight_is_one(self):
        H = self.rng.normal(size=(1, 1, 6))
        step = attention_context(self.model, H, self.rng.normal(size=(1, 3)))
        np.testing.assert_array_equal(step.alpha, [[1.0]])
        np.testing.assert_allclose(step.z[0], self.model.params["attn.W_z"] @ H[0, 0], atol=1e-14)

    def test_identical_columns_give_uniform_weights(self):
        col = self.rng.normal(size=6)
        H = np.tile(col, (1, 4, 1))
        step = attention_context(self.model, H, self.rng.normal(size=(1, 3)))
        np.testing.assert_allclose(step.alpha, np.full((1, 4), 0.25), atol=1e-15)
        # 重みが一様なら文脈は時間平均に等しい
        np.testing.assert_allclose(step.ctx, aggregate_avg(H), atol=1e-14)

    def test_weights_match_direct_computation(self):
        P = self.model.params
        H = self.rng.normal(size=(1, 4, 6))
        u = self.rng.normal(size=(1, 3))
        step = attention_context(self.model, H, u)
        e = np.array([P["attn.v_a"] @ np.tanh(P["attn.W_h"] @ H[0, t] + P["attn.W_u"] @ u[0]) for t in range(4)])
        alpha = np.exp(e) / np.exp(e).sum()
        np.testing.assert_allclose(step.alpha[0], alpha, atol=1e-12)
        np.testing.assert_allclose(step.ctx[0], alpha @ H[0], atol=1e-12)

    def test_normalization_over_many_steps(self):
        for _ in range(1000):
            ell = int(self.rng.integers(1, 13))
            H = self.rng.normal(0.0, 3.0, size=(1, ell, 6))
            u = self.rng.normal(0.0, 3.0, size=(1, 3))
            alpha = attention_context(self.model, H, u).alpha
            self.assertTrue(np.all(alpha >= 0.0))
            self.assertLessEqual(abs(alpha.sum() - 1.0), 1e-12)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            attention_context(self.model, np.zeros((1, 4, 5)), np.zeros((1, 3)))


class DecoderTests(SimpleTestCase):
    def setUp(self):
        self.rng = make_rng(7)

    def test_init_zero_and_saturated(self):
        model = make_model("avg")
        h_last = self.rng.normal(size=(2, 3))
        model.params["init.W_k"][...] = 0.0
        np.testing.assert_array_equal(decoder_init(model, h_last), np.zeros((2, 3)))
        model.params["init.b_k"][...] = 40.0
        np.testing.assert_allclose(decoder_init(model, h_last), np.ones((2, 3)), atol=1e-12)

    def test_init_matches_formula(self):
        model = make_model("avg")
        model.params["init.b_k"][...] = self.rng.normal(size=3)
        h_last = self.rng.normal(size=(1, 3))
        expected = np.tanh(model.params["init.W_k"] @ h_last[0] + model.params["init.b_k"])
        np.testing.assert_allclose(decoder_init(model, h_last)[0], expected, atol=1e-15)

    def test_single_step_is_one_cell_plus_head(self):
        model = make_model("max", h=1)
        X = self.rng.normal(size=(1, 4, 2))
        enc = bilstm_encode(model, X)
        Yhat, _ = decode_sequence(model, enc, X[:, -1], None, 1)

        P = model.params
        u0 = np.tanh(P["init.W_k"] @ enc.h_last[0] + P["init.b_k"])
        mu = np.concatenate([X[0, -1], enc.H[0].max(axis=0)])
        u1, _ = reference_cell(P, "dec", mu, u0, np.zeros(3))
        np.testing.assert_allclose(Yhat[0, 0], P["out.W_y"] @ u1 + P["out.b_y"], atol=1e-14)

    def test_zero_head_predicts_zero(self):
        model = make_model("attn", labeled=True)
        model.params["out.W_y"][...] = 0.0
        X = self.rng.normal(size=(3, 4, 2))
        psi = np.eye(2)[[0, 1, 0]]
        np.testing.assert_array_equal(model.predict(X, psi), np.zeros((3, 3, 2)))

    def test_descriptor_changes_predictions(self):
        model = make_model("attn", labeled=True)
        X = np.repeat(self.rng.normal(size=(1, 4, 2)), 2, axis=0)
        Yhat = model.predict(X, np.eye(2))
        self.assertFalse(np.allclose(Yhat[0], Yhat[1]))

    def test_descriptor_presence_must_match(self):
        labeled = make_model("avg", labeled=True)
        unlabeled = make_model("avg")
        X = self.rng.normal(size=(1, 4, 2))
        enc = bilstm_encode(labeled, X)
        with self.assertRaises(ConfigMismatch):
            decode_sequence(labeled, enc, X[:, -1], None, 3)
        with self.assertRaises(ConfigMismatch):
            decode_sequence(unlabeled, bilstm_encode(unlabeled, X), X[:, -1], np.eye(2)[:1], 3)
        with self.assertRaises(ConfigMismatch):
            labeled.predict(X)

    def test_unlabeled_ignores_descriptor(self):
        model = make_model("attn")
        X = self.rng.normal(size=(2, 4, 2))
        np.testing.assert_array_equal(model.predict(X, np.eye(2)), model.predict(X))

    def test_output_length_is_h_for_any_input(self):
        for ell in (1, 2, 7):
            model = make_model("attn", ell=ell, h=5)
            Yhat, alphas = model.predict_with_attention(self.rng.normal(size=(2, ell, 2)))
            self.assertEqual(Yhat.shape, (2, 5, 2))
            self.assertEqual(alphas.shape, (2, 5, ell))


class GradientCheckTests(SimpleTestCase):
    def check(self, model, *, forced=False):
        rng = make_rng(8, model.config.model_id, int(model.config.labeled))
        X = rng.normal(size=(2, 4, 2))
        Y = rng.normal(size=(2, 3, 2))
        psi = np.eye(2)[[1, 0]] if model.config.labeled else None
        R = rng.normal(size=(2, 3, 2))
        Ytf = Y if forced else None

        def loss(_params):
            Yhat, _ = model.forward(X, psi, Y=Ytf)
            return float(np.sum(R * Yhat))

        model.params.zero_grad()
        _, cache = model.forward(X, psi, Y=Ytf)
        model.backward(cache, R)
        analytic = {n: model.params.grad(n).copy() for n in model.params}
        numeric = finite_difference_gradient(loss, model.params)
        self.assertLess(
            max_relative_error(analytic, numeric), 1e-5, f"{model.config.model_id} labeled={model.config.labeled}"
        )

    def test_all_aggregations_labeled_and_unlabeled(self):
        for aggregation in ("max", "avg", "attn"):
            for labeled in (False, True):
                with self.subTest(aggregation=aggregation, labeled=labeled):
                    self.check(make_model(aggregation, labeled=labeled, seed=3))

    def test_teacher_forcing(self):
        self.check(make_model("attn", labeled=True, teacher_forcing=True, seed=4), forced=True)

    def test_batch_order_does_not_change_summed_gradient(self):
        model = make_model("attn", labeled=True, seed=5)
        rng = make_rng(9)
        X = rng.normal(size=(4, 4, 2))
        psi = np.eye(2)[[0, 1, 1, 0]]
        R = rng.normal(size=(4, 3, 2))
        perm = np.array([2, 0, 3, 1])

        def grads(idx):
            model.params.zero_grad()
            _, cache = model.forward(X[idx], psi[idx])
            model.backward(cache, R[idx])
            return {n: model.params.grad(n).copy() for n in model.params}

        a, b = grads(np.arange(4)), grads(perm)
        for name in a:
            np.testing.assert_allclose(a[name], b[name], atol=1e-12, rtol=0)


class TrainingSmokeTests(SimpleTestCase):
    def test_loss_decreases_with_adam(self):
        model = make_model("attn", q=4, seed=6)
        rng = make_rng(10)
        start = rng.normal(size=(20, 1, 2))
        step = rng.normal(0.0, 0.1, size=(20, 1, 2))
        track = start + step * np.arange(7)[None, :, None]
        X, Y = track[:, :4], track[:, 4:]

        cfg = AdamConfig(lr=1e-2)
        first = None
        for t in range(1, 51):
            Yhat, cache = model.forward(X)
            loss, dY = mae_loss(Yhat, Y)
            self.assertTrue(np.isfinite(loss))
            first = loss if first is None else first
            model.backward(cache, dY)
            adam_step(model.params, t, cfg)
        final, _ = mae_loss(model.predict(X), Y)
        self.assertLess(final, first)

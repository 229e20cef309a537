import numpy as np
import pytest

from toxiclass import neural as N
from toxiclass.errors import NumericError
from toxiclass.neural.losses import add_l2_gradients, bce_l2_loss, bce_loss, l2_penalty


def rng(seed=0):
    return np.random.default_rng(np.random.PCG64(seed))


def check_layer_grads(layer, x, seed=0, mask=None, reduce=None):
    """Finite-difference check of every parameter and the input gradient."""
    r = rng(seed)
    y = layer.forward(x, mask) if mask is not None else layer.forward(x)
    dout = r.standard_normal(np.shape(y)) if reduce is None else reduce
    layer.zero_grad()
    dx = layer.backward(dout)

    arrays = [p.value for p in layer.params()] + [x]
    analytic = [p.grad for p in layer.params()] + [dx]

    def loss():
        out = layer.forward(x, mask) if mask is not None else layer.forward(x)
        return float(np.sum(out * dout))

    return N.grad_check(loss, arrays, analytic)


class TestActivations:
    def test_sigmoid_stable_at_extremes(self):
        assert N.sigmoid(np.array([800.0]))[0] == 1.0
        assert N.sigmoid(np.array([-800.0]))[0] == pytest.approx(0.0, abs=1e-300)
        assert N.sigmoid(np.array([0.0]))[0] == 0.5

    def test_softmax_shift_invariant(self):
        x = np.array([1.0, 2.0, 3.0])
        assert np.allclose(N.softmax(x), N.softmax(x + 1000.0))
        assert N.softmax(x).sum() == pytest.approx(1.0)

    def test_relu_and_leaky(self):
        x = np.array([-2.0, 0.0, 3.0])
        assert N.relu(x).tolist() == [0.0, 0.0, 3.0]
        assert N.leaky_relu(x).tolist() == [-0.02, 0.0, 3.0]


class TestDense:
    def test_values(self):
        d = N.Dense(2, 2, rng(1))
        d.w.value[...] = [[1.0, 2.0], [3.0, 4.0]]
        d.b.value[...] = [0.5, -0.5]
        assert np.allclose(d.forward(np.array([1.0, 1.0])), [3.5, 6.5])

    def test_grad(self):
        d = N.Dense(5, 3, rng(2))
        assert check_layer_grads(d, rng(3).standard_normal(5)) < 1e-6

    def test_weight_params_exclude_bias(self):
        d = N.Dense(2, 2, rng(1))
        assert d.weight_params() == [d.w]


class TestConv1D:
    def test_output_length(self):
        c = N.Conv1D(3, 2, 4, rng(1))
        y = c.forward(rng(2).standard_normal((10, 2)))
        assert y.shape == (8, 4)

    def test_known_value(self):
        c = N.Conv1D(2, 1, 1, rng(1))
        c.filters.value[...] = np.array([[[1.0]], [[2.0]]])
        c.b.value[...] = [0.25]
        y = c.forward(np.array([[1.0], [2.0], [3.0]]))
        assert np.allclose(y[:, 0], [1 + 4 + 0.25, 2 + 6 + 0.25])

    def test_grad(self):
        c = N.Conv1D(3, 2, 4, rng(4))
        assert check_layer_grads(c, rng(5).standard_normal((9, 2))) < 1e-6


class TestMaxPool1D:
    def test_values_and_truncation(self):
        p = N.MaxPool1D(2)
        y = p.forward(np.array([[1.0], [5.0], [2.0], [3.0], [9.0]]))
        assert y[:, 0].tolist() == [5.0, 3.0]  # trailing odd row dropped

    def test_grad_routes_to_argmax(self):
        p = N.MaxPool1D(2)
        x = np.array([[1.0], [5.0], [7.0], [3.0]])
        p.forward(x)
        dx = p.backward(np.array([[1.0], [2.0]]))
        assert dx[:, 0].tolist() == [0.0, 1.0, 2.0, 0.0]

    def test_grad_numeric(self):
        p = N.MaxPool1D(2)
        assert check_layer_grads(p, rng(6).standard_normal((8, 3))) < 1e-6


class TestMaxOverTime:
    def test_masked(self):
        m = N.MaxOverTime()
        x = np.array([[1.0, -1.0], [5.0, -9.0], [9.0, 0.0]])
        y = m.forward(x, np.array([1.0, 1.0, 0.0]))
        assert y.tolist() == [5.0, -1.0]

    def test_grad(self):
        m = N.MaxOverTime()
        x = rng(7).standard_normal((6, 4))
        assert check_layer_grads(m, x, mask=np.array([1, 1, 1, 1, 0, 0.0])) < 1e-6

    def test_fully_masked_is_zero_and_blocks_grads(self):
        m = N.MaxOverTime()
        y = m.forward(np.ones((3, 2)), np.zeros(3))
        assert y.tolist() == [0.0, 0.0]
        assert m.backward(np.ones(2)).tolist() == [[0.0, 0.0]] * 3


class TestDropout:
    def test_eval_is_identity(self):
        d = N.Dropout(0.5)
        x = rng(8).standard_normal(10)
        assert np.array_equal(d.forward(x, train=False), x)

    def test_train_scales_survivors(self):
        d = N.Dropout(0.4)
        x = np.ones(2000)
        y = d.forward(x, train=True, rng=rng(9))
        kept = y != 0.0
        assert np.allclose(y[kept], 1.0 / 0.6)
        assert abs(kept.mean() - 0.6) < 0.05

    def test_backward_uses_same_mask(self):
        d = N.Dropout(0.5)
        x = np.ones(50)
        y = d.forward(x, train=True, rng=rng(10))
        dx = d.backward(np.ones(50))
        assert np.array_equal(dx != 0.0, y != 0.0)

    def test_rate_zero_noop(self):
        d = N.Dropout(0.0)
        x = rng(11).standard_normal(5)
        assert np.array_equal(d.forward(x, train=True, rng=rng(0)), x)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            N.Dropout(1.0)


class TestLSTM:
    def test_shapes(self):
        lstm = N.LSTM(3, 4, rng(12))
        h = lstm.forward(rng(13).standard_normal((5, 3)))
        assert h.shape == (5, 4)

    def test_masked_steps_copy_state(self):
        lstm = N.LSTM(3, 4, rng(14))
        x = rng(15).standard_normal((5, 3))
        mask = np.array([1.0, 1.0, 0.0, 0.0, 1.0])
        h = lstm.forward(x, mask)
        assert np.array_equal(h[2], h[1])
        assert np.array_equal(h[3], h[1])
        assert not np.array_equal(h[4], h[3])

    def test_padding_invariance(self):
        lstm = N.LSTM(3, 4, rng(16))
        x = rng(17).standard_normal((3, 3))
        h_short = lstm.forward(x, np.ones(3))
        padded = np.vstack([x, np.zeros((2, 3))])
        h_long = lstm.forward(padded, np.array([1, 1, 1, 0, 0.0]))
        assert np.allclose(h_long[:3], h_short)
        assert np.allclose(h_long[3:], h_short[-1])

    def test_zero_weights_give_zero_states(self):
        lstm = N.LSTM(3, 4, rng(18))
        for p in lstm.params():
            p.value[...] = 0.0
        h = lstm.forward(rng(19).standard_normal((6, 3)))
        assert np.all(h == 0.0)

    def test_grad_full_mask(self):
        lstm = N.LSTM(3, 4, rng(20))
        assert check_layer_grads(
            lstm, rng(21).standard_normal((5, 3)), mask=np.ones(5)) < 1e-5

    def test_grad_with_gaps(self):
        lstm = N.LSTM(2, 3, rng(22))
        mask = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 1.0])
        assert check_layer_grads(
            lstm, rng(23).standard_normal((6, 2)), mask=mask) < 1e-5


class TestBiLSTM:
    def test_concatenates_directions(self):
        b = N.BiLSTM(3, 4, rng(24))
        x = rng(25).standard_normal((5, 3))
        h = b.forward(x)
        assert h.shape == (5, 8)
        assert np.allclose(h[:, :4], b.fwd.forward(x))
        assert np.allclose(h[:, 4:], b.bwd.forward(x[::-1])[::-1])

    def test_zero_weights_give_zero_states(self):
        b = N.BiLSTM(2, 3, rng(26))
        for p in b.params():
            p.value[...] = 0.0
        assert np.all(b.forward(rng(27).standard_normal((4, 2))) == 0.0)

    def test_grad(self):
        b = N.BiLSTM(3, 2, rng(28))
        mask = np.array([1.0, 1.0, 1.0, 0.0])
        assert check_layer_grads(
            b, rng(29).standard_normal((4, 3)), mask=mask) < 1e-5


class TestAttention:
    def test_weights_form_distribution(self):
        a = N.Attention(4, rng(30))
        h = rng(31).standard_normal((6, 4))
        alpha, z = a.forward(h)
        assert alpha.shape == (6,) and z.shape == (4,)
        assert alpha.sum() == pytest.approx(1.0)
        assert np.all(alpha > 0)

    def test_masked_positions_get_zero_weight(self):
        a = N.Attention(4, rng(32))
        h = rng(33).standard_normal((5, 4))
        mask = np.array([1.0, 1.0, 0.0, 1.0, 0.0])
        alpha, z = a.forward(h, mask)
        assert alpha[2] == 0.0 and alpha[4] == 0.0
        assert alpha.sum() == pytest.approx(1.0)

    def test_zero_weights_give_uniform_alpha_and_mean_context(self):
        a = N.Attention(4, rng(34))
        a.w.value[...] = 0.0
        a.b.value[...] = 0.0
        h = rng(35).standard_normal((5, 4))
        alpha, z = a.forward(h)
        assert np.allclose(alpha, 0.2)
        assert np.allclose(z, h.mean(axis=0))

    def test_fully_masked_rejected(self):
        a = N.Attention(3, rng(36))
        with pytest.raises(ValueError):
            a.forward(np.ones((4, 3)), np.zeros(4))

    def test_grad(self):
        a = N.Attention(4, rng(37))
        h = rng(38).standard_normal((6, 4))
        mask = np.array([1.0, 1.0, 1.0, 1.0, 0.0, 1.0])
        dz = rng(39).standard_normal(4)
        a.forward(h, mask)
        a.zero_grad()
        dh = a.backward(dz)

        def loss():
            _, z = a.forward(h, mask)
            return float(z @ dz)

        worst = N.grad_check(loss, [a.w.value, h], [a.w.grad, dh])
        assert worst < 1e-6

    def test_score_bias_cancels_exactly(self):
        # the softmax is shift invariant, so the score bias never reaches the
        # output: its true gradient is identically zero
        a = N.Attention(4, rng(37))
        h = rng(38).standard_normal((6, 4))
        _, z0 = a.forward(h)
        a.zero_grad()
        a.backward(np.ones(4))
        assert abs(a.b.grad[0]) < 1e-12
        a.b.value[0] += 123.0
        _, z1 = a.forward(h)
        assert np.allclose(z0, z1, atol=1e-12)


class TestLosses:
    def test_bce_ln2_fixed_point(self):
        loss, _ = bce_loss(np.array([0.5]), np.array([1.0]))
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)

    def test_bce_mean_over_units(self):
        loss, _ = bce_loss(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)

    def test_clamping_keeps_loss_finite(self):
        loss, dp = bce_loss(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        assert np.isfinite(loss) and np.all(np.isfinite(dp))

    def test_gradient_matches_numeric(self):
        r = rng(40)
        p = r.uniform(0.05, 0.95, 8)
        y = (r.random(8) > 0.5).astype(float)
        _, dp = bce_loss(p, y)

        def loss():
            return bce_loss(p, y)[0]

        assert N.grad_check(loss, [p], [dp]) < 1e-6

    def test_l2_penalty_and_gradient(self):
        w = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert l2_penalty([w], 0.1) == pytest.approx(0.05 * 30.0)
        param = N.Param("w", w)
        add_l2_gradients([param], 0.1)
        assert np.allclose(param.grad, 0.1 * w)

    def test_combined_loss(self):
        w = np.ones((2, 2))
        total = bce_l2_loss(np.array([0.5]), np.array([1.0]), weights=[w], lam=0.5)
        assert total == pytest.approx(np.log(2.0) + 1.0)


class TestAdam:
    def test_two_steps_match_hand_computation(self):
        p = N.Param("x", np.array([1.0]))
        opt = N.Adam([p], learning_rate=0.1)
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        m = v = 0.0
        x = 1.0
        for t, g in ((1, 0.5), (2, -0.25)):
            p.grad[...] = g
            opt.step()
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
            assert p.value[0] == pytest.approx(x, abs=1e-15)

    def test_zero_learning_rate_freezes(self):
        p = N.Param("x", np.array([3.0]))
        opt = N.Adam([p], learning_rate=0.0)
        p.grad[...] = 5.0
        opt.step()
        assert p.value[0] == 3.0

    def test_negative_learning_rate_rejected(self):
        with pytest.raises(ValueError):
            N.Adam([], learning_rate=-0.1)

    def test_non_finite_gradient_rejected(self):
        p = N.Param("x", np.array([1.0]))
        opt = N.Adam([p], learning_rate=0.1)
        p.grad[...] = np.nan
        with pytest.raises(NumericError):
            opt.step()

    def test_zero_grad_clears(self):
        p = N.Param("x", np.array([1.0]))
        opt = N.Adam([p], learning_rate=0.1)
        p.grad[...] = 2.0
        opt.zero_grad()
        assert p.grad[0] == 0.0


class TestGradCheck:
    def test_detects_wrong_gradient(self):
        x = np.array([2.0])

        def loss():
            return float(x[0] ** 2)

        good = N.grad_check(loss, [x], [np.array([4.0])])
        bad = N.grad_check(loss, [x], [np.array([3.0])])
        assert good < 1e-6 < bad

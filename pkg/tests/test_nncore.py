"""Layer math: hand-computed cases, scalar reference oracles, and
finite-difference gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airgeo import nncore as nn


def scalar_lstm_step(x, h, c, p):
    """Independent per-element reference for one LSTM step."""
    H = p.hidden_dim
    out_h = np.zeros(H)
    out_c = np.zeros(H)
    z = np.zeros(4 * H)
    for j in range(4 * H):
        acc = p.b[j]
        for a in range(p.input_dim):
            acc += x[a] * p.W[a, j]
        for a in range(H):
            acc += h[a] * p.U[a, j]
        z[j] = acc
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    for j in range(H):
        i = sig(z[j])
        f = sig(z[H + j])
        o = sig(z[2 * H + j])
        g = np.tanh(z[3 * H + j])
        out_c[j] = f * c[j] + i * g
        out_h[j] = o * np.tanh(out_c[j])
    return out_h, out_c


class TestDense:
    def test_identity_weights(self):
        y = nn.dense_forward(np.array([[1.0, 2.0]]), np.eye(2), np.zeros(2))
        np.testing.assert_array_equal(y, [[1.0, 2.0]])

    def test_bias_shift(self):
        y = nn.dense_forward(np.array([[1.0, 1.0]]), np.eye(2), np.array([3.0, 4.0]))
        np.testing.assert_allclose(y, [[4.0, 5.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(1, 3\).*\(2, 2\)"):
            nn.dense_forward(np.ones((1, 3)), np.eye(2), np.zeros(2))

    def test_backward_matches_outer_product_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 2))
        dy = np.ones((3, 2))  # gradient of sum(output)
        dx, dW, db = nn.dense_backward(dy, x, w)
        # d sum(xW+b) / dW[i,j] = sum_b x[b,i]
        np.testing.assert_allclose(dW, np.outer(x.sum(axis=0), np.ones(2)))
        np.testing.assert_allclose(db, [3.0, 3.0])
        np.testing.assert_allclose(dx, np.tile(w.sum(axis=1), (3, 1)))

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 4))
        layer = nn.Dense(4, 2, rng)
        y = layer.forward(x)
        layer.backward(np.ones_like(y))
        report = nn.grad_check(
            lambda: float(layer.forward(x).sum()),
            {"W": layer.W, "b": layer.b},
            {"W": layer.dW, "b": layer.db},
            tol=1e-6,
        )
        assert report.ok, str(report)


class TestLstmCell:
    def test_zero_params_halve_cell_state(self):
        p = nn.LstmCellParams(2, 3, np.zeros((2, 12)), np.zeros((3, 12)), np.zeros(12))
        c = np.array([0.4, -1.0, 2.0])
        h, c_new = nn.lstm_cell_forward(np.zeros(2), np.zeros(3), c, p)
        np.testing.assert_allclose(c_new, 0.5 * c)
        np.testing.assert_allclose(h, 0.5 * np.tanh(0.5 * c))

    def test_origin_fixed_point(self):
        p = nn.LstmCellParams(2, 3, np.zeros((2, 12)), np.zeros((3, 12)), np.zeros(12))
        h, c = nn.lstm_cell_forward(np.zeros(2), np.zeros(3), np.zeros(3), p)
        np.testing.assert_array_equal(h, np.zeros(3))
        np.testing.assert_array_equal(c, np.zeros(3))

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(7)
        p = nn.LstmCellParams.create(3, 4, rng)
        x, h, c = rng.normal(size=3), rng.normal(size=4), rng.normal(size=4)
        got_h, got_c = nn.lstm_cell_forward(x, h, c, p)
        ref_h, ref_c = scalar_lstm_step(x, h, c, p)
        np.testing.assert_allclose(got_h, ref_h, atol=1e-10)
        np.testing.assert_allclose(got_c, ref_c, atol=1e-10)

    def test_dimension_mismatch(self):
        p = nn.LstmCellParams.create(3, 4, np.random.default_rng(0))
        with pytest.raises(ValueError):
            nn.lstm_cell_forward(np.zeros(2), np.zeros(4), np.zeros(4), p)

    def test_inconsistent_weight_shapes_rejected(self):
        with pytest.raises(ValueError):
            nn.LstmCellParams(2, 3, np.zeros((2, 12)), np.zeros((3, 11)), np.zeros(12))


class TestBiLstm:
    def test_single_step_equals_cell_output(self):
        rng = np.random.default_rng(3)
        fwd = nn.LstmCellParams.create(2, 3, rng)
        bwd = nn.LstmCellParams.create(2, 3, rng)
        seq = rng.normal(size=(1, 2))
        out = nn.bilstm_forward(seq, fwd, bwd)
        hf, _ = nn.lstm_cell_forward(seq[0], np.zeros(3), np.zeros(3), fwd)
        hb, _ = nn.lstm_cell_forward(seq[0], np.zeros(3), np.zeros(3), bwd)
        np.testing.assert_allclose(out[0], np.concatenate([hf, hb]))

    def test_palindrome_symmetry_with_tied_params(self):
        rng = np.random.default_rng(4)
        p = nn.LstmCellParams.create(2, 3, rng)
        half = rng.normal(size=(3, 2))
        seq = np.vstack([half, half[::-1]])  # palindrome, T=6
        out = nn.bilstm_forward(seq, p, p)
        T = seq.shape[0]
        for t in range(T):
            np.testing.assert_allclose(out[t, :3], out[T - 1 - t, 3:], atol=1e-12)

    def test_output_shape(self):
        rng = np.random.default_rng(5)
        fwd = nn.LstmCellParams.create(4, 8, rng)
        bwd = nn.LstmCellParams.create(4, 8, rng)
        out = nn.bilstm_forward(rng.normal(size=(21, 4)), fwd, bwd)
        assert out.shape == (21, 16)

    def test_empty_sequence_rejected(self):
        rng = np.random.default_rng(6)
        fwd = nn.LstmCellParams.create(2, 3, rng)
        bwd = nn.LstmCellParams.create(2, 3, rng)
        with pytest.raises(ValueError):
            nn.bilstm_forward(np.zeros((0, 2)), fwd, bwd)

    def test_bptt_gradients(self):
        rng = np.random.default_rng(8)
        fwd = nn.LstmCellParams.create(2, 3, rng)
        bwd = nn.LstmCellParams.create(2, 3, rng)
        x = rng.normal(size=(2, 4, 2))
        layer = nn.BiLstm(fwd, bwd)

        def loss():
            return float(layer.forward(x).sum())

        out = layer.forward(x)
        layer.zero_grad()
        dx = layer.backward(np.ones_like(out))
        params = dict(layer.params())
        grads = dict(layer.grads())
        report = nn.grad_check(loss, params, grads, tol=1e-5)
        assert report.ok, str(report)
        # input gradient too
        report_x = nn.grad_check(loss, {"x": x}, {"x": dx}, tol=1e-5)
        assert report_x.ok, str(report_x)


class TestLuongAttention:
    def test_single_timestep_passthrough(self):
        states = np.array([[0.3, -1.2]])
        ctx, w = nn.luong_attention(states, np.array([1.0, 2.0]), np.eye(2))
        np.testing.assert_allclose(w, [1.0])
        np.testing.assert_allclose(ctx, states[0])

    def test_identical_states_split_evenly(self):
        states = np.array([[0.5, 0.5], [0.5, 0.5]])
        _, w = nn.luong_attention(states, np.array([1.0, -1.0]), np.eye(2))
        np.testing.assert_allclose(w, [0.5, 0.5])

    def test_softmax_hand_case(self):
        # scores [0, ln2, ln4] -> weights proportional to [1, 2, 4]
        states = np.array([[0.0], [np.log(2.0)], [np.log(4.0)]])
        ctx, w = nn.luong_attention(states, np.array([1.0]), np.eye(1))
        np.testing.assert_allclose(w, [1 / 7, 2 / 7, 4 / 7])
        np.testing.assert_allclose(ctx, (w * states[:, 0]).sum())

    def test_empty_states_rejected(self):
        with pytest.raises(ValueError):
            nn.luong_attention(np.zeros((0, 2)), np.zeros(2), np.eye(2))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2**31 - 1))
    def test_weights_are_a_distribution(self, T, seed):
        rng = np.random.default_rng(seed)
        states = rng.normal(size=(T, 3)) * 3.0
        _, w = nn.luong_attention(states, rng.normal(size=3), rng.normal(size=(3, 3)))
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) < 1e-9

    def test_gradients(self):
        rng = np.random.default_rng(9)
        att = nn.LuongAttention(3, rng)
        states = rng.normal(size=(2, 4, 3))
        query = rng.normal(size=(2, 3))

        def loss():
            ctx, _ = att.forward(states, query)
            return float((ctx**2).sum())

        ctx, _ = att.forward(states, query)
        att.zero_grad()
        dstates, dquery = att.backward(2.0 * ctx)
        report = nn.grad_check(
            loss,
            {"A": att.A, "states": states, "query": query},
            {"A": att.dA, "states": dstates, "query": dquery},
            tol=1e-5,
        )
        assert report.ok, str(report)


class TestLayerNorm:
    def test_constant_input_maps_to_beta(self):
        out = nn.layer_norm(np.ones(3), np.ones(3), np.zeros(3))
        np.testing.assert_allclose(out, np.zeros(3))
        out = nn.layer_norm(np.full(3, 2.5), np.ones(3), np.full(3, 5.0))
        np.testing.assert_allclose(out, np.full(3, 5.0))

    def test_hand_case_population_variance(self):
        out = nn.layer_norm(np.array([1.0, 2.0, 3.0]), np.ones(3), np.zeros(3), eps=1e-12)
        np.testing.assert_allclose(out, [-1.22474487, 0.0, 1.22474487], atol=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nn.layer_norm(np.ones(3), np.ones(2), np.zeros(2))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=2, max_value=16), st.integers(min_value=0, max_value=2**31 - 1))
    def test_moments(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n) * 5.0 + 2.0
        if np.ptp(x) < 1e-6:
            x[0] += 1.0
        out = nn.layer_norm(x, np.ones(n), np.zeros(n), eps=1e-12)
        assert abs(out.mean()) < 1e-9
        assert abs(out.var() - 1.0) < 1e-6

    def test_gradients(self):
        rng = np.random.default_rng(10)
        ln = nn.LayerNorm(5)
        ln.gamma[:] = rng.normal(size=5)
        ln.beta[:] = rng.normal(size=5)
        x = rng.normal(size=(3, 5))

        def loss():
            return float((ln.forward(x) ** 3).sum())

        y = ln.forward(x)
        ln.zero_grad()
        dx = ln.backward(3.0 * y**2)
        report = nn.grad_check(
            loss,
            {"gamma": ln.gamma, "beta": ln.beta, "x": x},
            {"gamma": ln.dgamma, "beta": ln.dbeta, "x": dx},
            tol=1e-5,
        )
        assert report.ok, str(report)


class TestDropout:
    def test_rate_zero_is_identity(self):
        np.testing.assert_array_equal(nn.dropout_mask(8, 0.0, 1), np.ones(8))

    def test_deterministic_for_seed(self):
        np.testing.assert_array_equal(nn.dropout_mask(64, 0.3, 42), nn.dropout_mask(64, 0.3, 42))

    def test_kept_fraction_concentrates(self):
        mask = nn.dropout_mask(10_000, 0.5, 0)
        kept = (mask > 0).mean()
        assert 0.47 <= kept <= 0.53
        assert set(np.unique(mask)) <= {0.0, 2.0}

    def test_rate_one_rejected(self):
        with pytest.raises(ValueError):
            nn.dropout_mask(4, 1.0, 0)


class TestHuber:
    def test_zero_residual(self):
        loss, grad = nn.huber_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        assert loss == 0.0
        np.testing.assert_array_equal(grad, np.zeros(2))

    def test_quadratic_branch(self):
        loss, _ = nn.huber_loss(np.array([0.5]), np.array([0.0]), delta=1.0)
        assert loss == pytest.approx(0.125)

    def test_linear_branch(self):
        loss, _ = nn.huber_loss(np.array([2.0]), np.array([0.0]), delta=1.0)
        assert loss == pytest.approx(1.5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            nn.huber_loss(np.array([]), np.array([]))

    def test_equals_half_squared_error_inside_delta(self):
        rng = np.random.default_rng(11)
        e = rng.uniform(-1.0, 1.0, size=50)
        loss, _ = nn.huber_loss(e, np.zeros(50), delta=1.0)
        assert loss == pytest.approx(0.5 * (e**2).mean(), abs=1e-15)

    def test_once_differentiable_at_boundary(self):
        # piecewise derivative: e on the quadratic side, delta*sign(e) on the linear side
        delta = 1.0
        h = 1e-8
        _, g_in = nn.huber_loss(np.array([delta - h]), np.array([0.0]), delta)
        _, g_out = nn.huber_loss(np.array([delta + h]), np.array([0.0]), delta)
        assert abs(g_in[0] - g_out[0]) < 1e-7
        _, g_at = nn.huber_loss(np.array([delta]), np.array([0.0]), delta)
        assert abs(g_at[0] - delta) < 1e-9

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        pred = rng.normal(size=6) * 2.0
        target = rng.normal(size=6)
        _, grad = nn.huber_loss(pred, target, delta=0.7)
        report = nn.grad_check(
            lambda: nn.huber_loss(pred, target, delta=0.7)[0],
            {"pred": pred},
            {"pred": grad},
            tol=1e-6,
        )
        assert report.ok, str(report)


class TestAdam:
    def test_first_step_hand_value(self):
        theta = np.array([0.0])
        opt = nn.Adam([theta])
        opt.step([theta], [np.array([1.0])], lr=1e-3)
        # m_hat = v_hat = 1 at t=1, so the update is -lr/(1 + eps)
        assert theta[0] == pytest.approx(-1e-3, rel=1e-6)

    def test_zero_gradient_keeps_bits(self):
        theta = np.array([0.1234567890123456, -3.14159])
        before = theta.tobytes()
        opt = nn.Adam([theta])
        opt.step([theta], [np.zeros(2)], lr=1e-3)
        assert theta.tobytes() == before

    def test_descent_on_quadratic(self):
        theta = np.array([1.0])
        opt = nn.Adam([theta])
        trail = [abs(theta[0])]
        for _ in range(10):
            opt.step([theta], [2.0 * theta], lr=0.05)
            trail.append(abs(theta[0]))
        assert all(b < a for a, b in zip(trail, trail[1:]))

    def test_shape_mismatch(self):
        theta = np.zeros(3)
        opt = nn.Adam([theta])
        with pytest.raises(ValueError):
            opt.step([theta], [np.zeros(2)], lr=1e-3)

    def test_functional_wrapper_advances_counter(self):
        theta = np.zeros(2)
        st_ = nn.Adam([theta])
        nn.adam_step([theta], [np.ones(2)], st_, 1e-3)
        assert st_.t == 1


class TestLrSchedule:
    @pytest.mark.parametrize(
        "step,expected",
        [(0, 1e-3), (29999, 1e-3), (30000, 8e-4), (60000, 6.4e-4)],
    )
    def test_staircase_values(self, step, expected):
        assert nn.lr_at_step(step) == pytest.approx(expected, rel=1e-12)

    def test_non_increasing_with_jumps_only_at_interval(self):
        base, decay, interval = 0.01, 0.5, 7
        prev = nn.lr_at_step(0, base, decay, interval)
        for step in range(1, 50):
            cur = nn.lr_at_step(step, base, decay, interval)
            assert cur <= prev
            if step % interval != 0:
                assert cur == nn.lr_at_step(step - 1, base, decay, interval) or step % interval == 0
            prev = cur

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError):
            nn.lr_at_step(-1)


class TestGradCheck:
    def test_reports_non_finite_gradient_by_name(self):
        p = np.array([1.0])
        report = nn.grad_check(lambda: float(p[0] ** 2), {"p": p}, {"p": np.array([np.nan])})
        assert not report.ok
        assert any("p" in f for f in report.failures)

    def test_detects_wrong_gradient(self):
        p = np.array([2.0])
        report = nn.grad_check(lambda: float(p[0] ** 2), {"p": p}, {"p": np.array([1.0])}, tol=1e-4)
        assert not report.ok

    def test_passes_correct_gradient(self):
        p = np.array([2.0])
        report = nn.grad_check(lambda: float(p[0] ** 2), {"p": p}, {"p": np.array([4.0])}, tol=1e-6)
        assert report.ok
        assert report.max_rel_error < 1e-8


class TestGradCheckSweep:
    """Randomized finite-difference sweeps across layer types (unit-size)."""

    @pytest.mark.parametrize("seed", range(10))
    def test_dense_sweep(self, seed):
        rng = np.random.default_rng(seed)
        layer = nn.Dense(4, 3, rng)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=3)

        def loss():
            return float((layer.forward(x) @ w).sum())

        layer.forward(x)
        layer.zero_grad()
        layer.backward(np.tile(w, (3, 1)))
        report = nn.grad_check(loss, dict(layer.params()), dict(layer.grads()), tol=1e-6)
        assert report.ok, str(report)

    @pytest.mark.parametrize("seed", range(10))
    def test_lstm_cell_sweep(self, seed):
        rng = np.random.default_rng(100 + seed)
        p = nn.LstmCellParams.create(2, 3, rng)
        x = rng.normal(size=(2, 4, 2))
        layer = nn.Lstm(p)

        def loss():
            return float(layer.forward(x).sum())

        layer.forward(x)
        p.zero_grad()
        layer.backward(np.ones((2, 4, 3)))
        report = nn.grad_check(
            loss,
            {"W": p.W, "U": p.U, "b": p.b},
            {"W": p.dW, "U": p.dU, "b": p.db},
            tol=1e-4,
        )
        assert report.ok, str(report)

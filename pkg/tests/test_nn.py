"""GRU cell, embedding, losses, AdaDelta and the gradient checker."""

import math

import numpy as np
import pytest

from owl2seq import nn
from owl2seq.numkit import make_rng


def tiny_gru(input_dim=2, hidden_dim=2, fill=0.0):
    m = lambda r, c: np.full((r, c), fill, dtype=np.float64)
    return nn.GruParams(
        W_r=m(hidden_dim, input_dim), U_r=m(hidden_dim, hidden_dim),
        W_z=m(hidden_dim, input_dim), U_z=m(hidden_dim, hidden_dim),
        W_h=m(hidden_dim, input_dim), U_h=m(hidden_dim, hidden_dim),
    )


class TestEmbedWindow:
    def test_single_index_is_column(self):
        E = np.arange(6.0).reshape(2, 3)
        table = nn.EmbeddingTable(E=E)
        np.testing.assert_array_equal(nn.embed_window(table, [1]), E[:, 1])

    def test_repeated_index_repeats_thirds(self):
        table = nn.EmbeddingTable(E=make_rng(0).normal(size=(3, 6)))
        out = nn.embed_window(table, [2, 5, 2])
        np.testing.assert_array_equal(out[:3], out[6:])

    def test_hand_assembled_concatenation(self):
        E = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        out = nn.embed_window(nn.EmbeddingTable(E=E), [0, 2, 1])
        np.testing.assert_array_equal(out, [1.0, 4.0, 3.0, 6.0, 2.0, 5.0])

    def test_out_of_range_index(self):
        table = nn.EmbeddingTable(E=np.zeros((2, 3)))
        with pytest.raises(nn.VocabularyError, match="3"):
            nn.embed_window(table, [0, 3])


class TestGruStep:
    def test_zero_weights(self):
        p = tiny_gru()
        h_prev = np.array([0.4, -0.8])
        h, cache = nn.gru_step(p, np.array([1.0, 2.0]), h_prev)
        np.testing.assert_allclose(cache.r, 0.5, atol=1e-15)
        np.testing.assert_allclose(cache.z, 0.5, atol=1e-15)
        np.testing.assert_allclose(cache.h_tilde, 0.0, atol=1e-15)
        np.testing.assert_allclose(h, 0.5 * h_prev, atol=1e-15)

    def test_zero_hidden_and_zero_recurrent_weights(self):
        rng = make_rng(4)
        p = tiny_gru(3, 2)
        p.W_r[:] = rng.normal(size=(2, 3))
        p.W_z[:] = rng.normal(size=(2, 3))
        p.W_h[:] = rng.normal(size=(2, 3))
        x = rng.normal(size=3)
        h, _ = nn.gru_step(p, x, np.zeros(2))
        expected = (1.0 - 1.0 / (1.0 + np.exp(-(p.W_z @ x)))) * np.tanh(p.W_h @ x)
        np.testing.assert_allclose(h, expected, atol=1e-14)

    def test_scalar_transcription_oracle(self):
        # hidden 2, input 2, every weight 0.1, x=[1,0], h_prev=0: transcribe
        # the four update equations with plain floats.
        p = tiny_gru(fill=0.1)
        h, _ = nn.gru_step(p, np.array([1.0, 0.0]), np.zeros(2))
        a = 0.1 * 1.0 + 0.1 * 0.0
        r = 1.0 / (1.0 + math.exp(-a))
        z = 1.0 / (1.0 + math.exp(-a))
        h_tilde = math.tanh(a + r * 0.0)
        expected = z * 0.0 + (1.0 - z) * h_tilde
        np.testing.assert_allclose(h, [expected, expected], atol=1e-15)

    def test_gate_ranges(self):
        rng = make_rng(9)
        for _ in range(30):
            p = tiny_gru(3, 4)
            for name in ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h"):
                arr = getattr(p, name)
                arr[:] = rng.normal(size=arr.shape)
            _, cache = nn.gru_step(p, rng.normal(size=3), rng.normal(size=4))
            assert np.all(cache.r > 0) and np.all(cache.r < 1)
            assert np.all(cache.z > 0) and np.all(cache.z < 1)
            assert np.all(cache.h_tilde > -1) and np.all(cache.h_tilde < 1)

    def test_saturated_update_gate_keeps_or_replaces_state(self):
        rng = make_rng(10)
        h_prev = rng.normal(size=2)
        x = rng.normal(size=2)
        keep = tiny_gru()
        keep.W_z[:] = 800.0  # sigmoid saturates to exactly 1.0 in float64
        keep.W_h[:] = rng.normal(size=(2, 2))
        h, cache = nn.gru_step(keep, np.abs(x) + 1.0, h_prev)
        assert np.all(cache.z == 1.0)
        np.testing.assert_array_equal(h, h_prev)

        replace = tiny_gru()
        replace.W_z[:] = -800.0
        replace.W_h[:] = rng.normal(size=(2, 2))
        h, cache = nn.gru_step(replace, np.abs(x) + 1.0, h_prev)
        assert np.all(cache.z == 0.0)
        np.testing.assert_array_equal(h, cache.h_tilde)

    def test_shape_mismatch(self):
        with pytest.raises(Exception, match="shape"):
            nn.gru_step(tiny_gru(), np.zeros(3), np.zeros(2))


class TestGruBackward:
    def test_zero_upstream_gradient(self):
        rng = make_rng(2)
        p = tiny_gru(2, 2, fill=0.3)
        _, cache = nn.gru_step(p, rng.normal(size=2), rng.normal(size=2))
        dx, dh_prev, g = nn.gru_backward(cache, np.zeros(2))
        assert not dx.any() and not dh_prev.any()
        for name in ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h"):
            assert not getattr(g, name).any()

    def test_zero_weight_hidden_gradient_is_half(self):
        p = tiny_gru()
        _, cache = nn.gru_step(p, np.array([1.0, -1.0]), np.array([0.2, 0.7]))
        grad_h = np.array([1.0, 2.0])
        _, dh_prev, _ = nn.gru_backward(cache, grad_h)
        np.testing.assert_allclose(dh_prev, 0.5 * grad_h, atol=1e-15)

    def test_matches_finite_differences(self):
        rng = make_rng(3)
        input_dim, hidden_dim = 3, 4
        p = nn.GruParams.init(input_dim, hidden_dim, rng)
        x = rng.normal(size=input_dim)
        h_prev = rng.normal(size=hidden_dim)
        v = rng.normal(size=hidden_dim)  # probe: scalar f = v . h

        def f():
            h, _ = nn.gru_step(p, x, h_prev)
            return float(v @ h)

        _, cache = nn.gru_step(p, x, h_prev)
        dx, dh_prev, g = nn.gru_backward(cache, v)
        step = 1e-6

        def numeric(arr):
            out = np.zeros_like(arr)
            flat, out_flat = arr.reshape(-1), out.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                fp = f()
                flat[i] = orig - step
                fm = f()
                flat[i] = orig
                out_flat[i] = (fp - fm) / (2 * step)
            return out

        np.testing.assert_allclose(dx, numeric(x), rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(dh_prev, numeric(h_prev), rtol=1e-6, atol=1e-9)
        for name in ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h"):
            np.testing.assert_allclose(
                getattr(g, name), numeric(getattr(p, name)), rtol=1e-6, atol=1e-9,
                err_msg=name,
            )

    def test_batched_step_matches_vector_step(self):
        rng = make_rng(14)
        p = nn.GruParams.init(3, 4, rng)
        X = rng.normal(size=(5, 3))
        H_prev = rng.normal(size=(5, 4))
        H, bcache = nn.gru_step_batch(p, X, H_prev)
        dH = rng.normal(size=(5, 4))
        grads = nn.GruGrads.zeros_like(p)
        dX, dH_prev = nn.gru_backward_batch(bcache, dH, grads)
        expected = nn.GruGrads.zeros_like(p)
        for b in range(5):
            h, cache = nn.gru_step(p, X[b], H_prev[b])
            np.testing.assert_allclose(H[b], h, atol=1e-14)
            dx, dh_prev, g = nn.gru_backward(cache, dH[b])
            np.testing.assert_allclose(dX[b], dx, atol=1e-12)
            np.testing.assert_allclose(dH_prev[b], dh_prev, atol=1e-12)
            expected.add_(g)
        for name in ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h"):
            np.testing.assert_allclose(
                getattr(grads, name), getattr(expected, name), atol=1e-12
            )


class TestOutputAndLoss:
    def test_zero_head_uniform(self):
        head = nn.OutputHead(W=np.zeros((4, 3)), b=np.zeros(4))
        np.testing.assert_allclose(
            nn.output_distribution(head, np.ones(3)), [0.25] * 4, atol=1e-15
        )

    def test_bias_closed_form(self):
        head = nn.OutputHead(W=np.zeros((2, 3)), b=np.array([math.log(2.0), 0.0]))
        np.testing.assert_allclose(
            nn.output_distribution(head, np.zeros(3)), [2 / 3, 1 / 3], atol=1e-15
        )

    def test_argmax_matches_activation_argmax(self):
        rng = make_rng(21)
        for _ in range(20):
            head = nn.OutputHead(W=rng.normal(size=(6, 4)), b=rng.normal(size=6))
            h = rng.normal(size=4)
            o = head.W @ h + head.b
            assert np.argmax(nn.output_distribution(head, h)) == np.argmax(o)

    def test_point_mass_zero_loss(self):
        pred = [np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])]
        assert nn.sequence_cross_entropy(pred, [1, 0]) == 0.0

    def test_uniform_closed_form(self):
        pred = [np.full(10, 0.1)] * 3
        assert nn.sequence_cross_entropy(pred, [3, 7, 0]) == pytest.approx(
            3 * math.log(10.0), abs=1e-12
        )

    def test_non_negative(self):
        rng = make_rng(8)
        for _ in range(50):
            k = int(rng.integers(1, 6))
            pred = []
            gold = []
            for _ in range(k):
                p = rng.uniform(0.01, 1.0, size=5)
                p /= p.sum()
                pred.append(p)
                gold.append(int(rng.integers(5)))
            assert nn.sequence_cross_entropy(pred, gold) >= 0.0

    def test_length_mismatch_and_bad_index(self):
        with pytest.raises(Exception, match="2.*1|1.*2"):
            nn.sequence_cross_entropy([np.ones(3) / 3, np.ones(3) / 3], [0])
        with pytest.raises(nn.VocabularyError):
            nn.sequence_cross_entropy([np.ones(3) / 3], [3])


class TestAdaDelta:
    def test_zero_gradient_leaves_param(self):
        param = np.array([1.0, -2.0])
        state = nn.AdaDeltaState.for_param(param)
        state.Eg2[:] = 0.3
        state.Edx2[:] = 0.2
        nn.adadelta_step(param, np.zeros(2), state)
        np.testing.assert_array_equal(param, [1.0, -2.0])
        np.testing.assert_allclose(state.Eg2, 0.95 * 0.3, atol=1e-15)
        assert np.all(state.Edx2 <= 0.2)

    def test_scalar_oracle_first_step(self):
        # fresh accumulators, g = 1, rho = .95, eps = 1e-6, lr = 2:
        # Eg2 = .05, unit step = -sqrt(1e-6 / .050001), applied = 2x that.
        param = np.zeros(1)
        state = nn.AdaDeltaState.for_param(param, rho=0.95, epsilon=1e-6, lr=2.0)
        nn.adadelta_step(param, np.ones(1), state)
        eg2 = 0.05
        unit = -math.sqrt(1e-6 / (eg2 + 1e-6))
        assert unit == pytest.approx(-0.0044721, abs=5e-8)
        assert param[0] == pytest.approx(2.0 * unit, abs=1e-15)
        assert param[0] == pytest.approx(-0.0089442, abs=5e-7)
        assert state.Eg2[0] == pytest.approx(eg2, abs=1e-15)
        assert state.Edx2[0] == pytest.approx(0.05 * unit * unit, abs=1e-18)

    def test_identical_grads_identical_updates(self):
        rng = make_rng(6)
        grad = rng.normal(size=(3, 2))
        p1, p2 = np.ones((3, 2)), np.ones((3, 2))
        s1 = nn.AdaDeltaState.for_param(p1)
        s2 = nn.AdaDeltaState.for_param(p2)
        nn.adadelta_step(p1, grad, s1)
        nn.adadelta_step(p2, grad, s2)
        np.testing.assert_array_equal(p1, p2)

    def test_lr_scales_step_not_accumulators(self):
        rng = make_rng(7)
        grads = [rng.normal(size=4) for _ in range(5)]
        p_unit, p_scaled = np.zeros(4), np.zeros(4)
        s_unit = nn.AdaDeltaState.for_param(p_unit, lr=1.0)
        s_scaled = nn.AdaDeltaState.for_param(p_scaled, lr=2.0)
        for g in grads:
            before_unit = p_unit.copy()
            before_scaled = p_scaled.copy()
            nn.adadelta_step(p_unit, g, s_unit)
            nn.adadelta_step(p_scaled, g, s_scaled)
            np.testing.assert_allclose(
                p_scaled - before_scaled, 2.0 * (p_unit - before_unit), atol=1e-15
            )
        np.testing.assert_array_equal(s_unit.Eg2, s_scaled.Eg2)
        np.testing.assert_array_equal(s_unit.Edx2, s_scaled.Edx2)

    def test_shape_mismatch(self):
        param = np.zeros(2)
        with pytest.raises(Exception, match="shape"):
            nn.adadelta_step(param, np.zeros(3), nn.AdaDeltaState.for_param(param))


class TestGradientCheck:
    def test_quadratic_loss_is_exact(self):
        rng = make_rng(15)
        params = {"theta": rng.normal(size=(3, 4))}

        def fn():
            loss = 0.5 * float(np.sum(params["theta"] ** 2))
            return loss, {"theta": params["theta"].copy()}

        report = nn.gradient_check(fn, params, step=1e-5, tol=1e-4)
        assert report.passed
        assert report.max_rel_error < 1e-10

    def test_detects_corrupted_gradient(self):
        rng = make_rng(16)
        params = {"theta": rng.normal(size=6)}

        def fn():
            loss = 0.5 * float(np.sum(params["theta"] ** 2))
            return loss, {"theta": params["theta"] * 1.01}

        report = nn.gradient_check(fn, params)
        assert not report.passed
        assert "theta" in {e.name for e in report.failures}

    def test_subsampling_large_tensors(self):
        rng = make_rng(17)
        params = {"theta": rng.normal(size=(30, 30))}

        def fn():
            return 0.5 * float(np.sum(params["theta"] ** 2)), {"theta": params["theta"].copy()}

        report = nn.gradient_check(fn, params, max_coords=200, rng=make_rng(0))
        assert report.passed

    def test_non_finite_loss_raises(self):
        params = {"theta": np.zeros(2)}

        def fn():
            return float("nan"), {"theta": np.zeros(2)}

        with pytest.raises(nn.NumericError):
            nn.gradient_check(fn, params)

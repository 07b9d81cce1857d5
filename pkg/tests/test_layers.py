import numpy as np
import pytest

from catseq.nn import (
    Adam,
    LstmParams,
    Tensor,
    adam_step,
    dense,
    embedding_lookup,
    finite_difference_check,
    init_dense,
    init_embedding,
    init_lstm,
    layer_norm,
    lstm_sequence,
    lstm_step,
    scaled_dot_attention,
    softmax_cross_entropy,
)


class TestDense:
    def test_identity_weights(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        y = dense(x, Tensor(np.eye(3)), Tensor(np.zeros(3)))
        assert np.array_equal(y.data, x.data)

    def test_hand_case(self):
        x = Tensor([[1.0, 2.0]])
        W = Tensor([[3.0], [4.0]])
        assert dense(x, W).data.item() == 11.0

    def test_gradient(self, rng):
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        W = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        b = Tensor(rng.normal(size=5), requires_grad=True)
        err = finite_difference_check(lambda: (dense(x, W, b) ** 2).sum(), [x, W, b])
        assert err < 1e-4

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            dense(Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(4, 5))))


class TestEmbedding:
    def test_index_zero_is_mask_row(self, rng):
        table = init_embedding(rng, 5, 3)
        out = embedding_lookup(table, np.array([0, 2]))
        assert np.array_equal(out.data[0], table.data[0])

    def test_duplicate_indices_accumulate_gradient(self, rng):
        table = init_embedding(rng, 5, 3)
        out = embedding_lookup(table, np.array([[1, 1], [3, 1]]))
        out.backward(np.ones((2, 2, 3)))
        assert np.allclose(table.grad[1], 3.0)
        assert np.allclose(table.grad[3], 1.0)
        assert np.allclose(table.grad[0], 0.0)

    def test_one_hot_equivalence(self, rng):
        table = init_embedding(rng, 6, 4)
        for i in range(6):
            e = np.zeros(6)
            e[i] = 1.0
            assert np.allclose(embedding_lookup(table, np.array([i])).data[0], e @ table.data)

    def test_gradient(self, rng):
        table = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        idx = np.array([0, 4, 2, 2])
        err = finite_difference_check(
            lambda: (embedding_lookup(table, idx).tanh() ** 2).sum(), [table]
        )
        assert err < 1e-4

    def test_mask_row_untouched_without_mask_indices(self, rng):
        table = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        out = embedding_lookup(table, np.array([1, 2, 3]))
        out.backward(np.ones((3, 3)))
        assert np.allclose(table.grad[0], 0.0)
        assert np.any(table.grad[1] != 0)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_give_log_c(self):
        logits = Tensor(np.zeros((3, 7)))
        loss = softmax_cross_entropy(logits, np.array([0, 3, 6]))
        assert loss.data == pytest.approx(np.log(7))

    def test_extreme_logits_are_stable(self):
        logits = Tensor(np.array([[1000.0, 0.0]]))
        loss = softmax_cross_entropy(logits, np.array([0]))
        assert np.isfinite(loss.data)
        assert loss.data == pytest.approx(0.0, abs=1e-12)

    def test_gradient_one_hot_and_distribution(self, rng):
        logits = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        targets = rng.integers(0, 6, size=4)
        assert finite_difference_check(lambda: softmax_cross_entropy(logits, targets), [logits]) < 1e-4
        dist = rng.dirichlet(np.ones(6), size=4)
        assert finite_difference_check(lambda: softmax_cross_entropy(logits, dist), [logits]) < 1e-4

    def test_multi_hot_normalized_target(self):
        # two words present, mass split evenly: loss = -0.5 log p1 - 0.5 log p2
        logits = Tensor(np.log(np.array([[0.5, 0.25, 0.25]])))
        target = np.array([[0.5, 0.5, 0.0]])
        loss = softmax_cross_entropy(logits, target)
        assert loss.data == pytest.approx(-0.5 * np.log(0.5) - 0.5 * np.log(0.25))


class TestAttention:
    def test_single_position_returns_value(self, rng):
        q = Tensor(rng.normal(size=(1, 1, 4)))
        k = Tensor(rng.normal(size=(1, 1, 4)))
        v = Tensor(rng.normal(size=(1, 1, 4)))
        out = scaled_dot_attention(q, k, v)
        assert np.allclose(out.data, v.data)

    def test_causal_first_position_sees_itself_only(self, rng):
        q = Tensor(rng.normal(size=(1, 3, 4)))
        k = Tensor(rng.normal(size=(1, 3, 4)))
        v = Tensor(rng.normal(size=(1, 3, 4)))
        mask = np.tril(np.ones((3, 3), dtype=bool))
        out = scaled_dot_attention(q, k, v, mask)
        assert np.allclose(out.data[0, 0], v.data[0, 0])

    def test_rows_sum_to_one_and_masked_weights_zero(self, rng):
        q = Tensor(rng.normal(size=(2, 5, 3)))
        k = Tensor(rng.normal(size=(2, 5, 3)))
        mask = rng.random((5, 5)) < 0.5
        mask[:, 0] = True  # keep at least one visible key per query
        scores = (q @ k.transpose((0, 2, 1))) * (1.0 / np.sqrt(3))
        additive = np.where(mask, 0.0, -1e30)
        weights = (scores + Tensor(additive)).softmax(axis=-1).data
        assert np.allclose(weights.sum(axis=-1), 1.0, atol=1e-9)
        assert np.all(weights[:, ~mask] == 0.0)

    def test_gradient_with_mask(self, rng):
        q = Tensor(rng.normal(size=(2, 4, 3)), requires_grad=True)
        k = Tensor(rng.normal(size=(2, 4, 3)), requires_grad=True)
        v = Tensor(rng.normal(size=(2, 4, 3)), requires_grad=True)
        mask = np.tril(np.ones((4, 4), dtype=bool))
        err = finite_difference_check(
            lambda: (scaled_dot_attention(q, k, v, mask) ** 2).sum(), [q, k, v]
        )
        assert err < 1e-4


class TestLayerNorm:
    def test_normalizes_last_axis(self, rng):
        x = Tensor(rng.normal(size=(3, 8)) * 5 + 2)
        out = layer_norm(x, Tensor(np.ones(8)), Tensor(np.zeros(8))).data
        assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-9)
        assert np.allclose(out.std(axis=-1), 1.0, atol=1e-2)

    def test_gradient(self, rng):
        x = Tensor(rng.normal(size=(3, 6)), requires_grad=True)
        g = Tensor(rng.normal(size=6), requires_grad=True)
        b = Tensor(rng.normal(size=6), requires_grad=True)
        err = finite_difference_check(lambda: (layer_norm(x, g, b) ** 3).sum(), [x, g, b])
        assert err < 1e-4


class TestLstm:
    def test_zero_weights_zero_state_give_zero_hidden(self):
        p = LstmParams(
            Wx=Tensor(np.zeros((3, 8))), Wh=Tensor(np.zeros((2, 8))), b=Tensor(np.zeros(8))
        )
        h, c = lstm_step(Tensor(np.ones((1, 3))), Tensor(np.zeros((1, 2))), Tensor(np.zeros((1, 2))), p)
        assert np.allclose(h.data, 0.0)

    def test_saturated_forget_gate_preserves_cell(self):
        H = 2
        b = np.zeros(4 * H)
        b[0 * H : 1 * H] = -50.0  # input gate ~ 0
        b[1 * H : 2 * H] = 50.0  # forget gate ~ 1
        p = LstmParams(
            Wx=Tensor(np.zeros((3, 4 * H))), Wh=Tensor(np.zeros((H, 4 * H))), b=Tensor(b)
        )
        c_prev = Tensor(np.array([[0.3, -0.7]]))
        _, c = lstm_step(Tensor(np.ones((1, 3))), Tensor(np.zeros((1, H))), c_prev, p)
        assert np.allclose(c.data, c_prev.data, atol=1e-12)

    def test_gradient_through_three_step_unroll(self, rng):
        p = init_lstm(rng, 3, 4)
        xs = [Tensor(rng.normal(size=(2, 3)), requires_grad=True) for _ in range(3)]

        def loss():
            hs, _ = lstm_sequence(xs, p)
            return (hs[-1] ** 2).sum()

        err = finite_difference_check(loss, [p.Wx, p.Wh, p.b] + xs)
        assert err < 1e-4


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        param = np.ones(4)
        state = {}
        adam_step(param, np.zeros(4), state)
        assert np.array_equal(param, np.ones(4))

    def test_constant_gradient_step_approaches_lr_sign(self):
        param = np.array([0.0])
        state = {}
        lr = 1e-3
        prev = param.copy()
        for _ in range(5000):
            prev = param.copy()
            adam_step(param, np.array([2.5]), state, lr=lr)
        assert (prev - param)[0] == pytest.approx(lr, rel=1e-3)

    def test_determinism(self, rng):
        grads = rng.normal(size=(50, 3))
        results = []
        for _ in range(2):
            param = np.zeros(3)
            state = {}
            for g in grads:
                adam_step(param, g, state)
            results.append(param.copy())
        assert np.array_equal(results[0], results[1])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step(np.zeros(3), np.zeros(4), {})


def test_overfit_small_memorization_task(rng):
    # capacity check: a small MLP drives loss below 0.01 on 10 samples
    X = rng.normal(size=(10, 4))
    y = rng.integers(0, 3, size=10)
    W1, b1 = init_dense(rng, 4, 32)
    W2, b2 = init_dense(rng, 32, 3)
    opt = Adam({"W1": W1, "b1": b1, "W2": W2, "b2": b2}, lr=1e-2)
    loss_value = np.inf
    for step in range(2000):
        opt.zero_grad()
        logits = dense(dense(Tensor(X), W1, b1).tanh(), W2, b2)
        loss = softmax_cross_entropy(logits, y)
        loss.backward()
        opt.step()
        loss_value = float(loss.data)
        if loss_value < 0.01:
            break
    assert loss_value < 0.01

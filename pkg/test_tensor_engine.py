"""
Tests du moteur de tenseurs
"""
import numpy as np
import pytest
import scipy.sparse as sp

import tensor_engine as te
from errors import NumericError, ShapeError
from tensor_engine import AdamState, Tensor


def numeric_grad(fn, x: Tensor, eps=1e-5):
    grad = np.zeros(x.shape)
    original = x.values
    for idx in np.ndindex(*x.shape):
        values = original.copy()
        values[idx] += eps
        x.values = values
        plus = fn().item()
        values[idx] -= 2 * eps
        minus = fn().item()
        grad[idx] = (plus - minus) / (2 * eps)
    x.values = original
    return grad


def test_linear_identity_and_zero_input(rng):
    x = Tensor(rng.standard_normal((3, 4)))
    out = te.linear(x, Tensor(np.eye(4)), Tensor(np.zeros((1, 4))))
    np.testing.assert_array_equal(out.values, x.values)

    b = Tensor(rng.standard_normal((1, 2)))
    out = te.linear(Tensor(np.zeros((5, 4))), Tensor(rng.standard_normal((2, 4))), b)
    np.testing.assert_array_equal(out.values, np.tile(b.values, (5, 1)))


def test_linear_matches_triple_loop(rng):
    x = rng.standard_normal((3, 4))
    W = rng.standard_normal((2, 4))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += x[i, k] * W[j, k]
    np.testing.assert_allclose(te.linear(Tensor(x), Tensor(W)).values, expected, rtol=1e-12)


def test_linear_sparse_input_matches_dense(rng):
    dense = (rng.random((5, 6)) < 0.4).astype(float)
    W = Tensor(rng.standard_normal((3, 6)), requires_grad=True)
    sparse_out = te.linear(sp.csr_matrix(dense), W)
    np.testing.assert_allclose(sparse_out.values, dense @ W.values.T)
    te.backward(te.sum_all(sparse_out))
    np.testing.assert_allclose(W.grad, np.tile(dense.sum(axis=0), (3, 1)))


def test_linear_shape_mismatch():
    with pytest.raises(ShapeError):
        te.linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))


def test_activation_analytic_values():
    assert te.activation(Tensor(0.0), "tanh").item() == 0.0
    assert te.activation(Tensor(0.0), "sigmoid").item() == 0.5
    assert te.activation(Tensor(-1.0), "leaky_relu").item() == pytest.approx(-0.2)


def test_activation_matches_scalar_reference(rng):
    values = rng.uniform(-5, 5, size=100)
    x = Tensor(values)
    np.testing.assert_allclose(te.activation(x, "tanh").values.ravel(), [np.tanh(v) for v in values])
    np.testing.assert_allclose(te.activation(x, "sigmoid").values.ravel(),
                               [1.0 / (1.0 + np.exp(-v)) for v in values], rtol=1e-12)
    np.testing.assert_allclose(te.activation(x, "leaky_relu").values.ravel(),
                               [v if v > 0 else 0.2 * v for v in values])


def test_sigmoid_stable_for_large_inputs():
    out = te.activation(Tensor([[-800.0, 800.0]]), "sigmoid").values
    assert np.all(np.isfinite(out))
    assert out[0, 1] == 1.0


def test_masked_softmax_uniform_and_singleton():
    out = te.masked_softmax(Tensor(np.ones((1, 6))), mask=[0, 2, 3, 5]).values.ravel()
    np.testing.assert_allclose(out, [0.25, 0, 0.25, 0.25, 0, 0.25])
    out = te.masked_softmax(Tensor(np.array([[3.0, -2.0, 7.0]])), mask=[1]).values.ravel()
    np.testing.assert_array_equal(out, [0.0, 1.0, 0.0])


def test_masked_softmax_large_scores_finite():
    out = te.masked_softmax(Tensor([[1000.0, 1001.0]])).values.ravel()
    e = np.exp(-1.0)
    np.testing.assert_allclose(out, [e / (1 + e), 1 / (1 + e)], rtol=1e-14)


def test_masked_softmax_empty_mask():
    with pytest.raises(ValueError):
        te.masked_softmax(Tensor(np.zeros((1, 3))), mask=[])


def test_masked_softmax_rows_sum_to_one(rng):
    for _ in range(1000):
        scores = Tensor(rng.standard_normal((1, 5)) * rng.uniform(0.1, 50))
        assert te.masked_softmax(scores).values.sum() == pytest.approx(1.0, abs=1e-12)


def test_concat_and_weighted_sum_selector(rng):
    a = Tensor(rng.standard_normal((1, 2)))
    b = Tensor(rng.standard_normal((1, 3)))
    np.testing.assert_array_equal(te.concat([a, b]).values, np.hstack([a.values, b.values]))

    parts = [Tensor(rng.standard_normal((4, 3))) for _ in range(3)]
    out = te.weighted_sum(parts, Tensor([[1.0, 0.0, 0.0]]))
    np.testing.assert_array_equal(out.values, parts[0].values)


def test_weighted_sum_weight_gradient(rng):
    parts = [Tensor(rng.standard_normal((4, 3))) for _ in range(3)]
    w = Tensor(rng.standard_normal((1, 3)), requires_grad=True)
    upstream = rng.standard_normal((4, 3))

    def loss():
        return te.sum_all(te.mul(te.weighted_sum(parts, w), Tensor(upstream)))

    te.backward(loss())
    expected = [float((upstream * p.values).sum()) for p in parts]
    np.testing.assert_allclose(w.grad.ravel(), expected, rtol=1e-10)
    np.testing.assert_allclose(w.grad, numeric_grad(loss, w), rtol=1e-6)


def test_backward_sum_and_square(rng):
    x = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
    te.backward(te.sum_all(x))
    np.testing.assert_array_equal(x.grad, np.ones((3, 2)))

    x.zero_grad()
    te.backward(te.sum_all(te.mul(x, x)))
    np.testing.assert_allclose(x.grad, 2 * x.values)


def test_backward_accumulates(rng):
    x = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    te.backward(te.sum_all(x))
    te.backward(te.sum_all(x))
    np.testing.assert_array_equal(x.grad, 2 * np.ones((2, 2)))


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        te.backward(te.scale(x, 2.0))


def test_shared_subexpression_gradient(rng):
    x = Tensor(rng.standard_normal((2, 3)), requires_grad=True)

    def loss():
        y = te.activation(x, "tanh")
        return te.sum_all(te.add(te.mul(y, y), te.scale(y, 3.0)))

    te.backward(loss())
    np.testing.assert_allclose(x.grad, numeric_grad(loss, x), rtol=1e-6, atol=1e-9)


def test_segment_ops_gradients(rng):
    seg = np.array([0, 0, 1, 2, 2, 2])
    scores = Tensor(rng.standard_normal((6, 2)), requires_grad=True)
    values = Tensor(rng.standard_normal((6, 2)))
    weights = Tensor(rng.standard_normal((3, 2)))

    def loss():
        alpha = te.segment_softmax(scores, seg, 3)
        return te.sum_all(te.mul(te.segment_sum(te.mul(alpha, values), seg, 3), weights))

    alpha = te.segment_softmax(scores, seg, 3).values
    for s in range(3):
        np.testing.assert_allclose(alpha[seg == s].sum(axis=0), 1.0, atol=1e-12)
    te.backward(loss())
    np.testing.assert_allclose(scores.grad, numeric_grad(loss, scores), rtol=1e-6, atol=1e-9)


def test_head_ops_gradients(rng):
    x = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
    a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)

    def loss():
        w = te.activation(te.head_dot(x, a), "tanh")
        return te.sum_all(te.activation(te.head_scale(x, w), "tanh"))

    te.backward(loss())
    gx, ga = x.grad.copy(), a.grad.copy()
    np.testing.assert_allclose(gx, numeric_grad(loss, x), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(ga, numeric_grad(loss, a), rtol=1e-6, atol=1e-9)


def test_non_finite_raises_numeric_error():
    with pytest.raises(NumericError) as info:
        te.scale(Tensor([[1e308]]), 10.0)
    assert info.value.op_name == "scale"
    with pytest.raises(NumericError):
        te.log(Tensor([[0.0]]))


def test_adam_zero_gradient_leaves_params():
    w = Tensor(np.array([[1.0, -2.0]]), requires_grad=True)
    te.adam_step({"w": w}, {"w": np.zeros((1, 2))}, AdamState(), lr=0.1)
    np.testing.assert_array_equal(w.values, [[1.0, -2.0]])


def test_adam_first_step_magnitude():
    w = Tensor(np.array([[1.0, -2.0, 0.5]]), requires_grad=True)
    g = np.array([[3.0, -0.01, 100.0]])
    te.adam_step({"w": w}, {"w": g}, AdamState(), lr=0.01)
    np.testing.assert_allclose(w.values - [[1.0, -2.0, 0.5]], -0.01 * np.sign(g), rtol=1e-5)


def test_adam_minimizes_quadratic():
    w = Tensor(np.array([[1.0]]), requires_grad=True)
    state = AdamState()
    for _ in range(100):
        w.zero_grad()
        te.backward(te.sum_all(te.mul(w, w)))
        te.adam_step({"w": w}, {"w": w.grad}, state, lr=0.05)
    assert np.linalg.norm(w.values) < 1e-2
    assert state.step == 100


def test_xavier_variance():
    rng = np.random.default_rng(0)
    draws = te.xavier_uniform(rng, 40, 25)
    assert draws.shape == (40, 25)
    assert draws.var() == pytest.approx(2.0 / (25 + 40), rel=0.2)


def test_computation_record_topological(rng):
    x = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    y = te.activation(x, "tanh")
    z = te.sum_all(te.add(y, y))
    record = te.ComputationRecord(z)
    position = {id(n): k for k, n in enumerate(record.nodes)}
    for node in record.nodes:
        for parent in node._parents:
            if parent.requires_grad:
                assert position[id(parent)] < position[id(node)]

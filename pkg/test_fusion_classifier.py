"""
Tests de la fusion d'information et du classifieur
"""
import numpy as np
import pytest

import fusion_classifier as fc
import tensor_engine as te
from errors import SplitError
from tensor_engine import Tensor

WIDTHS = {"local": 6, "longrange": 8, "feature": 4}


def fusion(seed=0, widths=None, embed_dim=32):
    return fc.FusionParams.init(np.random.default_rng(seed), widths or WIDTHS, embed_dim=embed_dim, hidden=10,
                                att_dim=5)


def inputs(rng, n=4):
    return (Tensor(rng.standard_normal((n, 6))), Tensor(rng.standard_normal((n, 8))),
            Tensor(rng.standard_normal((n, 4))))


def leaky(v):
    return np.where(v > 0, v, 0.2 * v)


def test_project_zero_input_zero_output():
    params = fusion()
    out = fc.project(Tensor(np.zeros((3, 6))), "local", params)
    np.testing.assert_array_equal(out.values, np.zeros((3, 32)))


def test_project_width_for_every_source(rng):
    params = fusion()
    for source, e in zip(fc.SOURCES, inputs(rng)):
        assert fc.project(e, source, params).shape == (4, 32)


def test_project_matches_scalar_evaluation(rng):
    params = fusion(widths={"local": 4, "longrange": 4, "feature": 4})
    params.first["local"][1].values = rng.standard_normal((1, 10))
    params.b2.values = rng.standard_normal((1, 32))
    x = rng.standard_normal(4)
    W1, b1 = params.first["local"][0].values, params.first["local"][1].values.ravel()
    hidden = [0.0] * 10
    for j in range(10):
        hidden[j] = sum(W1[j, k] * x[k] for k in range(4)) + b1[j]
    hidden = leaky(np.array(hidden))
    expected = params.W2.values @ hidden + params.b2.values.ravel()
    np.testing.assert_allclose(fc.project(Tensor(x), "local", params).values.ravel(), expected, rtol=1e-12)


def test_identical_projections_uniform_phi(rng):
    params = fusion()
    m = Tensor(rng.standard_normal((3, 32)))
    phi = fc.info_weights(m, m, m, params).values
    np.testing.assert_allclose(phi, np.full((3, 3), 1 / 3), atol=1e-15)


def test_zero_p_uniform_phi(rng):
    params = fusion()
    params.p = Tensor(np.zeros(params.p.shape))
    ms = [Tensor(rng.standard_normal((2, 32))) for _ in range(3)]
    np.testing.assert_allclose(fc.info_weights(*ms, params).values, 1 / 3)


def test_phi_softmax_arithmetic():
    phi = te.masked_softmax(Tensor([[0.0, np.log(2), np.log(4)]])).values.ravel()
    np.testing.assert_allclose(phi, [1 / 7, 2 / 7, 4 / 7], rtol=1e-12)


def test_phi_rows_are_probability_vectors():
    rng = np.random.default_rng(3)
    for trial in range(1000):
        params = fusion(seed=trial, embed_dim=4)
        params.p = Tensor(params.p.values * rng.uniform(0.1, 50))
        ms = [Tensor(rng.standard_normal((2, 4)) * 10) for _ in range(3)]
        phi = fc.info_weights(*ms, params).values
        np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(phi >= 0)


def test_forced_selector_phi(rng):
    params = fusion()
    h, g, f = inputs(rng)
    z, _ = fc.fuse(h, g, f, params, forced_phi=[1.0, 0.0, 0.0])
    np.testing.assert_allclose(z.values, fc.project(h, "local", params).values)


def test_fuse_matches_direct_evaluation(rng):
    params = fusion()
    h, g, f = inputs(rng)
    z, phi = fc.fuse(h, g, f, params)
    ms = [fc.project(e, s, params).values for e, s in zip((h, g, f), fc.SOURCES)]
    eta = np.stack([np.tanh(m @ params.W_att.values.T + params.b_att.values) @ params.p.values.ravel()
                    for m in ms], axis=1)
    expected_phi = np.exp(eta) / np.exp(eta).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(phi.values, expected_phi, rtol=1e-12)
    expected_z = sum(expected_phi[:, [k]] * ms[k] for k in range(3))
    np.testing.assert_allclose(z.values, expected_z, rtol=1e-12, atol=1e-14)


def test_fuse_stays_in_componentwise_hull(rng):
    params = fusion()
    h, g, f = inputs(rng)
    z, _ = fc.fuse(h, g, f, params)
    ms = np.stack([fc.project(e, s, params).values for e, s in zip((h, g, f), fc.SOURCES)])
    assert np.all(z.values >= ms.min(axis=0) - 1e-12)
    assert np.all(z.values <= ms.max(axis=0) + 1e-12)


def test_predict_zero_weights_half():
    classifier = fc.ClassifierParams.init(np.random.default_rng(0), embed_dim=32, hidden=32)
    for t in classifier.tensors().values():
        t.values = np.zeros(t.shape)
    probs = fc.predict(Tensor(np.ones((5, 32))), classifier)
    np.testing.assert_array_equal(probs.values, 0.5)


def test_predict_matches_scalar(rng):
    classifier = fc.ClassifierParams.init(np.random.default_rng(1), embed_dim=32, hidden=32)
    z = rng.standard_normal(32)
    hidden = leaky(classifier.W1.values @ z + classifier.b1.values.ravel())
    logit = (classifier.W2.values @ hidden + classifier.b2.values.ravel()).item()
    prob = fc.predict(Tensor(z), classifier).item()
    assert prob == pytest.approx(1 / (1 + np.exp(-logit)), rel=1e-12)
    assert 0.0 < prob < 1.0


def test_predict_monotone_in_final_bias(rng):
    classifier = fc.ClassifierParams.init(np.random.default_rng(2), embed_dim=8, hidden=8)
    z = Tensor(rng.standard_normal((1, 8)))
    previous = 0.0
    for bias in np.linspace(-5, 5, 11):
        classifier.b2.values = np.array([[bias]])
        prob = fc.predict(z, classifier).item()
        assert prob > previous
        previous = prob


def test_loss_balanced_half_probabilities():
    probs = Tensor(np.full((6, 1), 0.5))
    loss = fc.class_balanced_loss(probs, [0, 1, 2], [3, 4, 5], lam=1.0)
    assert loss.item() == pytest.approx(6 * np.log(2), rel=1e-12)


def test_loss_perfect_predictions_near_zero():
    probs = Tensor(np.array([[1e-12], [1 - 1e-12], [1e-12], [1 - 1e-12]]))
    loss = fc.class_balanced_loss(probs, [0, 2], [1, 3], lam=0.4)
    assert 0.0 <= loss.item() < 1e-6


def test_loss_non_negative_and_decreasing_in_fraud_probability():
    rng = np.random.default_rng(5)
    for _ in range(200):
        probs = Tensor(rng.uniform(0.01, 0.99, (6, 1)))
        assert fc.class_balanced_loss(probs, [0, 1, 2], [3, 4, 5], lam=0.4).item() >= 0.0
    values = []
    for p in (0.1, 0.3, 0.6, 0.9):
        probs = np.full((4, 1), 0.5)
        probs[3] = p
        values.append(fc.class_balanced_loss(Tensor(probs), [0, 1], [2, 3], lam=0.4).item())
    assert all(a > b for a, b in zip(values, values[1:]))


def test_lambda_scales_only_legit_terms():
    p = np.array([0.2, 0.7, 0.4, 0.9])
    probs = Tensor(p.reshape(-1, 1))
    fraud_term = -np.log(p[3])
    for i in (0, 1, 2):
        legit_term = -np.log(1 - p[i])
        high = fc.class_balanced_loss(probs, [i], [3], lam=0.6).item()
        low = fc.class_balanced_loss(probs, [i], [3], lam=0.3).item()
        assert high - low == pytest.approx(0.3 * legit_term, rel=1e-10)
        assert low < high
        assert low - 0.3 * legit_term == pytest.approx(fraud_term, rel=1e-12)
        assert high - 0.6 * legit_term == pytest.approx(fraud_term, rel=1e-12)


def test_loss_gradient_per_logit():
    lam = 0.3
    logits = Tensor(np.array([[0.4], [-1.2], [2.0]]), requires_grad=True)
    legit, fraud = [0, 1], [2]

    def loss():
        return fc.class_balanced_loss(te.activation(logits, "sigmoid"), legit, fraud, lam)

    te.backward(loss())
    p = 1 / (1 + np.exp(-logits.values.ravel()))
    expected = np.array([lam * (p[0] - 0), lam * (p[1] - 0), 1.0 * (p[2] - 1)])
    np.testing.assert_allclose(logits.grad.ravel(), expected, rtol=1e-10)

    eps = 1e-5
    for i in range(3):
        original = logits.values.copy()
        logits.values = original + eps * np.eye(3)[:, [i]]
        plus = loss().item()
        logits.values = original - eps * np.eye(3)[:, [i]]
        minus = loss().item()
        logits.values = original
        assert (plus - minus) / (2 * eps) == pytest.approx(expected[i], rel=1e-6)


def test_loss_rejects_overlap_and_bad_lambda():
    probs = Tensor(np.full((3, 1), 0.5))
    with pytest.raises(SplitError):
        fc.class_balanced_loss(probs, [0, 1], [1, 2], lam=0.5)
    with pytest.raises(ValueError):
        fc.class_balanced_loss(probs, [0], [2], lam=0.0)


def test_end_to_end_gradient_check(rng):
    params = fusion(embed_dim=6)
    classifier = fc.ClassifierParams.init(np.random.default_rng(5), embed_dim=6, hidden=5)
    h, g, f = inputs(rng, n=5)

    def loss():
        z, _ = fc.fuse(h, g, f, params)
        return fc.class_balanced_loss(fc.predict(z, classifier), [0, 1, 2], [3, 4], lam=0.4)

    named = {**params.tensors(), **classifier.tensors()}
    te.backward(loss())
    eps = 1e-5
    for name, t in named.items():
        analytic = t.grad
        original = t.values
        for idx in np.ndindex(*t.shape):
            values = original.copy()
            values[idx] += eps
            t.values = values
            plus = loss().item()
            values[idx] -= 2 * eps
            minus = loss().item()
            numeric = (plus - minus) / (2 * eps)
            error = abs(analytic[idx] - numeric) / max(abs(analytic[idx]), abs(numeric), 1e-3)
            assert error <= 1e-4, name
        t.values = original

import numpy as np
import pytest

from gnuq import nnet
from gnuq.nnet import MlpSpec, HEAD_BINARY, HEAD_SOFTMAX, HEAD_IDENTITY


def central_fd_grad(f, theta, eps=1e-6):
    """Central finite differences of a scalar function, the oracle every
    analytic gradient in this file is checked against."""
    g = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += eps
        tm = theta.copy()
        tm[i] -= eps
        g[i] = (f(tp) - f(tm)) / (2.0 * eps)
    return g


def test_param_count_examples():
    assert nnet.param_count(MlpSpec(2, (8, 8), 1)) == 105
    assert nnet.param_count(MlpSpec(2, (), 4, head=HEAD_SOFTMAX)) == 12
    assert nnet.param_count(MlpSpec(2, (), 1)) == 3
    assert nnet.param_count(MlpSpec(1, (32,), 1, head=HEAD_IDENTITY)) == 97


@pytest.mark.parametrize("w", [1, 8, 16, 64])
def test_param_count_square_mlp_formula(w):
    # two hidden layers of width w on 2d input, single logit
    spec = MlpSpec(2, (w, w), 1)
    assert nnet.param_count(spec) == w * w + 5 * w + 1


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec(0, (4,), 1)
    with pytest.raises(ValueError):
        MlpSpec(2, (4, 0), 1)
    with pytest.raises(ValueError):
        MlpSpec(2, (), 3)  # binary head requires a single logit
    with pytest.raises(ValueError):
        MlpSpec(2, (), 1, head=HEAD_SOFTMAX)  # softmax needs >= 2 classes
    with pytest.raises(ValueError):
        MlpSpec(2, (), 1, head="identity")


def test_init_deterministic():
    spec = MlpSpec(2, (8, 8), 1)
    a = nnet.init_params(spec, 42)
    b = nnet.init_params(spec, 42)
    c = nnet.init_params(spec, 43)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (105,)


def test_split_params_roundtrip_layout():
    spec = MlpSpec(3, (5,), 4, head=HEAD_SOFTMAX)
    theta = np.arange(nnet.param_count(spec), dtype=float)
    Ws, bs = nnet.split_params(spec, theta)
    assert [W.shape for W in Ws] == [(3, 5), (5, 4)]
    assert [b.shape for b in bs] == [(5,), (4,)]
    flat = np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(Ws, bs)])
    assert np.array_equal(flat, theta)


def test_probs_batch_bounds_and_normalization():
    rng = np.random.default_rng(0)
    for spec in [MlpSpec(2, (8,), 1), MlpSpec(2, (6,), 3, head=HEAD_SOFTMAX)]:
        theta = nnet.init_params(spec, 1) * 4.0
        X = rng.normal(size=(50, 2))
        P = nnet.probs_batch(spec, theta, X)
        k = 2 if spec.head == HEAD_BINARY else 3
        assert P.shape == (50, k)
        assert np.all(P > 0.0) and np.all(P < 1.0)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_identity_head_probs_are_raw_outputs():
    spec = MlpSpec(1, (), 1, head=HEAD_IDENTITY)
    theta = np.array([2.0, -1.0])
    X = np.array([[0.0], [1.0], [3.0]])
    P = nnet.probs_batch(spec, theta, X)
    np.testing.assert_allclose(P[:, 0], [-1.0, 1.0, 5.0], atol=1e-14)


def test_grad_prob_matches_finite_differences():
    rng = np.random.default_rng(7)
    cases = [
        (MlpSpec(2, (8, 8), 1), 1),
        (MlpSpec(2, (8, 8), 1), 0),
        (MlpSpec(3, (5,), 4, head=HEAD_SOFTMAX), 2),
        (MlpSpec(2, (4,), 3, head=HEAD_SOFTMAX), 0),
    ]
    for spec, c in cases:
        theta = nnet.init_params(spec, 3)
        for _ in range(5):
            x = rng.uniform(-2, 2, spec.input_dim)
            g = nnet.grad_prob(spec, theta, x, c)
            fd = central_fd_grad(lambda t: nnet.predict_prob(spec, t, x, c), theta)
            err = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
            assert err < 1e-5


def test_grad_output_matches_finite_differences():
    spec = MlpSpec(1, (6,), 1, head=HEAD_IDENTITY)
    theta = nnet.init_params(spec, 5)
    x = np.array([0.7])
    g = nnet.grad_output(spec, theta, x)
    fd = central_fd_grad(lambda t: nnet.forward(spec, t, x), theta)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_grad_output_rejects_classifier():
    spec = MlpSpec(2, (), 1)
    theta = nnet.init_params(spec, 0)
    with pytest.raises(ValueError):
        nnet.grad_output(spec, theta, np.zeros(2))


def test_binary_class_gradients_negate():
    # p0 = 1 - p1, so the two class gradients must be exact negatives
    spec = MlpSpec(2, (8,), 1)
    theta = nnet.init_params(spec, 2)
    x = np.array([0.3, -1.1])
    g1 = nnet.grad_prob(spec, theta, x, 1)
    g0 = nnet.grad_prob(spec, theta, x, 0)
    np.testing.assert_allclose(g0, -g1, atol=1e-15)


def test_softmax_class_gradients_sum_to_zero():
    # sum_c p_c = 1 identically in theta
    spec = MlpSpec(2, (5,), 4, head=HEAD_SOFTMAX)
    theta = nnet.init_params(spec, 8)
    x = np.array([1.2, -0.4])
    total = sum(nnet.grad_prob(spec, theta, x, c) for c in range(4))
    np.testing.assert_allclose(total, 0.0, atol=1e-12)


def test_check_class_bounds():
    spec = MlpSpec(2, (4,), 3, head=HEAD_SOFTMAX)
    theta = nnet.init_params(spec, 0)
    with pytest.raises(ValueError):
        nnet.grad_prob(spec, theta, np.zeros(2), 3)
    with pytest.raises(ValueError):
        nnet.grad_prob(spec, theta, np.zeros(2), -1)
    spec2 = MlpSpec(2, (), 1)
    theta2 = nnet.init_params(spec2, 0)
    with pytest.raises(ValueError):
        nnet.grad_prob(spec2, theta2, np.zeros(2), 2)


def test_loss_and_grad_matches_finite_differences():
    rng = np.random.default_rng(31)
    for spec, ymake in [
        (MlpSpec(2, (6,), 1), lambda n: rng.integers(0, 2, n).astype(float)),
        (MlpSpec(2, (6,), 3, head=HEAD_SOFTMAX), lambda n: rng.integers(0, 3, n).astype(float)),
        (MlpSpec(2, (6,), 1, head=HEAD_IDENTITY), lambda n: rng.normal(size=n)),
    ]:
        theta = nnet.init_params(spec, 4)
        X = rng.normal(size=(12, 2))
        y = ymake(12)
        loss, g = nnet.loss_and_grad(spec, theta, X, y, prior_precision=0.5)
        fd = central_fd_grad(
            lambda t: nnet.loss_and_grad(spec, t, X, y, prior_precision=0.5)[0], theta)
        err = np.linalg.norm(g - fd) / np.linalg.norm(fd)
        assert err < 1e-5
        assert loss > 0.0


def test_loss_prior_term_value():
    # with zero data-fit the prior contributes (lam/2)||theta||^2
    spec = MlpSpec(1, (), 1, head=HEAD_IDENTITY)
    theta = np.array([3.0, 4.0])
    X = np.array([[0.0]])
    y = np.array([4.0])  # output = 0*3 + 4 = y, residual zero
    loss0, _ = nnet.loss_and_grad(spec, theta, X, y, prior_precision=0.0)
    loss1, _ = nnet.loss_and_grad(spec, theta, X, y, prior_precision=2.0)
    assert loss1 - loss0 == pytest.approx(0.5 * 2.0 * 25.0, rel=1e-12)


def test_per_sample_prob_grads_match_single():
    spec = MlpSpec(2, (5,), 3, head=HEAD_SOFTMAX)
    theta = nnet.init_params(spec, 6)
    rng = np.random.default_rng(6)
    X = rng.normal(size=(9, 2))
    vals, G = nnet.per_sample_prob_grads(spec, theta, X, c=2)
    assert G.shape == (9, nnet.param_count(spec))
    for i in range(9):
        np.testing.assert_allclose(G[i], nnet.grad_prob(spec, theta, X[i], 2), atol=1e-12)
        assert vals[i] == pytest.approx(nnet.predict_prob(spec, theta, X[i], 2), abs=1e-14)


def test_per_sample_nll_grads_average_to_full_gradient():
    spec = MlpSpec(2, (4,), 1)
    theta = nnet.init_params(spec, 7)
    rng = np.random.default_rng(7)
    X = rng.normal(size=(20, 2))
    y = rng.integers(0, 2, 20).astype(float)
    G = nnet.per_sample_nll_grads(spec, theta, X, y)
    _, g = nnet.loss_and_grad(spec, theta, X, y, prior_precision=0.0)
    np.testing.assert_allclose(G.mean(axis=0), g, atol=1e-12)


def test_gradnorm_batch_matches_per_sample():
    spec = MlpSpec(2, (8, 8), 1)
    theta = nnet.init_params(spec, 9)
    rng = np.random.default_rng(9)
    X = rng.normal(size=(30, 2))
    vals, sq = nnet.gradnorm_batch(spec, theta, X, c=1)
    _, G = nnet.per_sample_prob_grads(spec, theta, X, c=1)
    np.testing.assert_allclose(sq, (G * G).sum(axis=1), rtol=1e-10)
    np.testing.assert_allclose(vals, nnet.probs_batch(spec, theta, X)[:, 1], atol=1e-12)

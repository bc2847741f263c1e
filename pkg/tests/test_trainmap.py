import numpy as np
import pytest

from gnuq import nnet, synthgen
from gnuq.nnet import MlpSpec, HEAD_SOFTMAX, HEAD_IDENTITY
from gnuq.trainmap import TrainConfig, TrainDiverged, train_map


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(prior_precision=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(max_iters=-1)
    with pytest.raises(ValueError):
        TrainConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        TrainConfig(step_size=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")


def test_zero_iters_returns_init():
    ds = synthgen.make_linear2d(60, seed=0)
    spec = MlpSpec(2, (), 1)
    cfg = TrainConfig(max_iters=0, seed=3)
    theta, report = train_map(spec, ds, cfg)
    np.testing.assert_array_equal(theta, nnet.init_params(spec, 3))
    assert report.iters_used == 0
    assert np.isfinite(report.final_loss)


def test_deterministic():
    ds = synthgen.make_xor2d(120, seed=1)
    spec = MlpSpec(2, (8,), 1)
    cfg = TrainConfig(max_iters=300)
    t1, r1 = train_map(spec, ds, cfg)
    t2, r2 = train_map(spec, ds, cfg)
    assert np.array_equal(t1, t2)
    assert r1.final_loss == r2.final_loss
    assert r1.iters_used == r2.iters_used


def test_convex_problem_init_independence():
    # logistic regression with a gaussian prior is strictly convex, so the
    # optimum must not depend on where adam starts
    ds = synthgen.make_linear2d(100, seed=2)
    spec = MlpSpec(2, (), 1)
    sols = []
    for seed in (0, 7):
        cfg = TrainConfig(max_iters=20000, grad_tol=1e-9, seed=seed)
        theta, report = train_map(spec, ds, cfg)
        assert report.final_grad_norm <= 1e-9
        sols.append(theta)
    assert np.linalg.norm(sols[0] - sols[1]) < 1e-6


def test_longer_run_never_worse():
    ds = synthgen.make_xor2d(120, seed=3)
    spec = MlpSpec(2, (8, 8), 1)
    losses = []
    for iters in (50, 200, 800):
        _, report = train_map(spec, ds, TrainConfig(max_iters=iters))
        losses.append(report.final_loss)
    assert losses[1] <= losses[0] + 1e-12
    assert losses[2] <= losses[1] + 1e-12


def test_returned_loss_matches_returned_params():
    ds = synthgen.make_xor2d(120, seed=4)
    spec = MlpSpec(2, (8,), 1)
    cfg = TrainConfig(max_iters=400)
    theta, report = train_map(spec, ds, cfg)
    X, y = nnet.dataset_arrays(spec, ds)
    loss, grad = nnet.loss_and_grad(spec, theta, X, y, cfg.prior_precision)
    assert loss == pytest.approx(report.final_loss, rel=1e-12)
    assert np.linalg.norm(grad) == pytest.approx(report.final_grad_norm, rel=1e-9, abs=1e-12)


def test_separable_problems_reach_high_accuracy():
    cases = [
        (synthgen.make_linear2d(200, seed=5), MlpSpec(2, (), 1)),
        (synthgen.make_xor2d(200, noise=0.3, seed=5), MlpSpec(2, (8, 8), 1)),
        (synthgen.make_clusters2d(200, k=4, seed=5),
         MlpSpec(2, (), 4, head=HEAD_SOFTMAX)),
    ]
    for ds, spec in cases:
        _, report = train_map(spec, ds, TrainConfig(max_iters=3000))
        assert report.train_accuracy >= 0.95
        assert report.train_rmse is None


def test_regression_reports_rmse_near_noise_floor():
    ds = synthgen.make_regression1d("linear", 150, noise_sd=0.3, seed=6)
    spec = MlpSpec(1, (), 1, head=HEAD_IDENTITY)
    _, report = train_map(spec, ds, TrainConfig(max_iters=5000))
    assert report.train_accuracy is None
    assert 0.2 <= report.train_rmse <= 0.4


def test_divergence_raises_with_last_iterate():
    # absurd step size blows up the identity-head quadratic loss
    ds = synthgen.make_regression1d("linear", 50, seed=7)
    spec = MlpSpec(1, (32,), 1, head=HEAD_IDENTITY)
    cfg = TrainConfig(max_iters=5000, step_size=1e6)
    with pytest.raises(TrainDiverged) as exc:
        train_map(spec, ds, cfg)
    assert exc.value.last_params.shape == (nnet.param_count(spec),)
    assert np.all(np.isfinite(exc.value.last_params))
    assert np.isfinite(exc.value.last_loss)

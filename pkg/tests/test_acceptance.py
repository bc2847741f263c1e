"""Acceptance gate: one test per shipping criterion.

Each test asserts its numeric bands and prints a single PASS/FAIL line
(visible under -s or -rA), so `pytest -v tests/test_acceptance.py` reads as
a criterion-by-criterion verdict. Pipeline runs at full default budget are
shared through module fixtures; the scaling ladder dominates the wall time.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from gnuq import bench, cli, nnet, refpost, stats, synthgen, uq

pytestmark = pytest.mark.acceptance


def _line(tag, ok, detail=""):
    print(f"acceptance {tag}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else ""))
    return ok


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# shared full-budget pipeline runs

@pytest.fixture(scope="module")
def linear_run():
    return _timed(bench.run_validation_classification, ("linear",), seed=0)


@pytest.fixture(scope="module")
def xor_run():
    return _timed(bench.run_validation_classification, ("xor",), seed=0)


@pytest.fixture(scope="module")
def clusters_run():
    return _timed(bench.run_validation_classification, ("clusters",), seed=0)


@pytest.fixture(scope="module")
def regression_run():
    return _timed(bench.run_validation_regression, seed=0)


@pytest.fixture(scope="module")
def proxy_run():
    return _timed(bench.run_proxy_bias, seed=0)


@pytest.fixture(scope="module")
def proxy_run_swapped():
    return _timed(bench.run_proxy_bias, seed=0, swap_halves=True)


@pytest.fixture(scope="module")
def scaling_run():
    return _timed(bench.run_scaling, seed=0)


# ---------------------------------------------------------------------------
# 1. gradients vs central finite differences

def _fd_grad(f, theta):
    g = np.empty(theta.size)
    for i in range(theta.size):
        h = 1e-6 * max(1.0, abs(theta[i]))
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2.0 * h)
    return g


def _rel_l2(got, want):
    scale = max(float(np.linalg.norm(want)), 1e-12)
    return float(np.linalg.norm(got - want)) / scale


def _random_case(rng, kind):
    in_dim = int(rng.integers(1, 4))
    hidden = tuple(int(w) for w in rng.integers(2, 6, size=int(rng.integers(0, 3))))
    if kind == 0:
        spec = nnet.MlpSpec(in_dim, hidden, 1, head=nnet.HEAD_BINARY)
    elif kind == 1:
        spec = nnet.MlpSpec(in_dim, hidden, int(rng.integers(2, 5)), head=nnet.HEAD_SOFTMAX)
    else:
        spec = nnet.MlpSpec(in_dim, hidden, 1, head=nnet.HEAD_IDENTITY)
    theta = 0.6 * rng.standard_normal(nnet.param_count(spec))
    return spec, theta


def _random_dataset(rng, spec, m=8):
    X = rng.standard_normal((m, spec.input_dim))
    if spec.head == nnet.HEAD_BINARY:
        y, k = rng.integers(0, 2, size=m), 2
    elif spec.head == nnet.HEAD_SOFTMAX:
        y, k = rng.integers(0, spec.output_dim, size=m), spec.output_dim
    else:
        y, k = rng.standard_normal(m), 0
    return synthgen.LabeledDataset(X, y, "fd-check", 0, k)


def test_01_gradients_match_finite_differences():
    rng = np.random.default_rng(8191)
    lams = (0.0, 0.05, 0.5)
    cases = 0
    worst = 0.0
    t0 = time.perf_counter()
    for i in range(110):
        spec, theta = _random_case(rng, i % 3)
        if spec.head != nnet.HEAD_IDENTITY:
            x = rng.standard_normal(spec.input_dim)
            c = int(rng.integers(0, spec.output_dim if spec.head == nnet.HEAD_SOFTMAX else 2))
            got = nnet.grad_prob(spec, theta, x, c)
            want = _fd_grad(lambda t: nnet.predict_prob(spec, t, x, c), theta)
            worst = max(worst, _rel_l2(got, want))
        ds = _random_dataset(rng, spec)
        lam = lams[i % 3]
        _, got = nnet.grad_loss(spec, theta, ds, lam)
        want = _fd_grad(lambda t: nnet.grad_loss(spec, t, ds, lam)[0], theta)
        worst = max(worst, _rel_l2(got, want))
        cases += 1
    elapsed = time.perf_counter() - t0
    ok = cases >= 100 and worst < 1e-5 and elapsed < 10.0
    assert _line("01 gradient check", ok, f"{cases} cases, max rel err {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. sampler calibration on a standard normal

def test_02_hmc_gaussian_calibration():
    cal, elapsed = _timed(refpost.gaussian_calibration, dim=2, seed=0)
    ok = (
        cal.mean_abs_max < 0.05
        and cal.cov_abs_max_err < 0.1
        and 0.7 <= cal.accept_rate <= 0.9
        and elapsed < 60.0
    )
    assert _line(
        "02 sampler calibration", ok,
        f"mean {cal.mean_abs_max:.3f}, cov {cal.cov_abs_max_err:.3f}, "
        f"accept {cal.accept_rate:.2f}, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 3-5. classification validation vs the sampler reference

def test_03_linear_validation(linear_run):
    rep, elapsed = linear_run
    assert not rep.error_rows
    rho = rep.value(problem="linear", estimator="gn", metric_name="spearman")
    r = rep.value(problem="linear", estimator="gn", metric_name="pearson")
    ale = rep.value(problem="linear", estimator="aleatoric-point", metric_name="spearman")
    ok = rho >= 0.95 and r >= 0.90 and ale >= 0.98 and elapsed < 600.0
    assert _line(
        "03 linear validation", ok,
        f"gn rho {rho:.3f}, gn r {r:.3f}, aleatoric rho {ale:.3f}, {elapsed:.0f}s",
    )


def test_04_xor_validation(xor_run):
    rep, elapsed = xor_run
    assert not rep.error_rows
    rho = rep.value(problem="xor", estimator="gn", metric_name="spearman")
    agree = rep.value(problem="xor", estimator="gn-vs-laplace", metric_name="spearman")
    ok = 0.45 <= rho <= 0.90 and agree >= 0.90 and elapsed < 900.0
    assert _line(
        "04 xor validation", ok,
        f"gn rho {rho:.3f}, gn-vs-laplace rho {agree:.3f}, {elapsed:.0f}s",
    )


def test_05_clusters_multiclass(clusters_run):
    rep, elapsed = clusters_run
    assert not rep.error_rows
    rho = rep.value(problem="clusters", estimator="gn", metric_name="spearman")
    ale = rep.value(problem="clusters", estimator="aleatoric-point", metric_name="spearman")
    per_class = [
        rep.value(problem="clusters", estimator=f"gn:c{c}", metric_name="spearman")
        for c in range(4)
    ]
    spread = max(per_class) - min(per_class)
    ok = rho >= 0.90 and ale >= 0.95 and spread <= 0.15 and elapsed < 1200.0
    assert _line(
        "05 clusters multiclass", ok,
        f"pooled gn rho {rho:.3f}, aleatoric rho {ale:.3f}, "
        f"class spread {spread:.3f}, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 6. regression anisotropy

def test_06_regression_anisotropy(regression_run):
    rep, elapsed = regression_run
    assert not rep.error_rows
    la = rep.value(problem="regression-nonlinear", estimator="laplace", metric_name="spearman")
    gn = rep.value(problem="regression-nonlinear", estimator="gn", metric_name="spearman")
    ratio_nl = rep.value(problem="regression-nonlinear", estimator="fisher", metric_name="eig_ratio")
    ratio_li = rep.value(problem="regression-linear", estimator="fisher", metric_name="eig_ratio")
    ok = la - gn >= 0.05 and ratio_nl / ratio_li >= 100.0 and elapsed < 600.0
    assert _line(
        "06 regression anisotropy", ok,
        f"la-gn {la - gn:.3f}, eig ratio x{ratio_nl / ratio_li:.0f}, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 7. proxy-covariance bias

def test_07_proxy_bias(proxy_run, proxy_run_swapped):
    (rep, _maps), elapsed = proxy_run
    (rep_swap, _), elapsed_swap = proxy_run_swapped
    assert not rep.error_rows and not rep_swap.error_rows
    d = rep.value(problem="xor", estimator="logratio", metric_name="cohens_d")
    p = rep.value(problem="xor", estimator="logratio", metric_name="welch_p")
    r_a = rep.value(problem="xor", estimator="laplace-a", metric_name="ratio_top_bottom")
    r_id = rep.value(problem="xor", estimator="gn", metric_name="ratio_top_bottom")
    r_b = rep.value(problem="xor", estimator="laplace-b", metric_name="ratio_top_bottom")
    d_swap = rep_swap.value(problem="xor", estimator="logratio", metric_name="cohens_d")
    d_lin = rep.value(problem="linear", estimator="logratio", metric_name="cohens_d")
    ok = (
        d <= -1.0
        and p < 1e-6
        and r_a < r_id < r_b
        and d_swap == -d
        and abs(d_lin) < abs(d)
        and elapsed + elapsed_swap < 900.0
    )
    assert _line(
        "07 proxy bias", ok,
        f"xor d {d:.2f}, p {p:.1e}, order {r_a:.2f}<{r_id:.2f}<{r_b:.2f}, "
        f"swap exact {d_swap == -d}, linear d {d_lin:.2f}, {elapsed + elapsed_swap:.0f}s",
    )


# ---------------------------------------------------------------------------
# 8. scaling ladder shape

def test_08_scaling_ladder(scaling_run):
    rep, elapsed = scaling_run
    assert not rep.error_rows
    ladder = bench.default_scaling_ladder()
    rho = [
        rep.value(
            problem="rings-binary", model=bench.model_name(s),
            estimator="gn", metric_name="spearman",
        )
        for s in ladder
    ]
    lo = int(np.argmin(rho))
    ok = (
        rho[0] >= 0.90
        and 0 < lo < len(rho) - 1
        and rho[-1] - rho[lo] >= 0.05
        and elapsed < 7200.0
    )
    assert _line(
        "08 scaling ladder", ok,
        "rho " + " ".join(f"{v:.2f}" for v in rho) + f", min at {lo}, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 9. algebraic identities

def test_09_algebraic_identities():
    rng = np.random.default_rng(33)

    # cross-term expansion: ||mean_t g_t||^2 equals the double sum over tokens
    G = rng.standard_normal((7, 12))
    sg = uq.SequenceGradients(G, rng.uniform(0.1, 0.9, 7))
    direct = uq.sequence_epistemic(sg)
    expanded = float(sum(G[t] @ G[u] for t in range(7) for u in range(7))) / 49.0
    err_cross = abs(direct - expanded) / abs(expanded)

    # linearity: the mean-probability gradient equals the mean token gradient,
    # on both analytic paths and against finite differences
    spec = nnet.MlpSpec(2, (4,), 3, head=nnet.HEAD_SOFTMAX)
    theta = 0.5 * rng.standard_normal(nnet.param_count(spec))
    X = rng.standard_normal((6, 2))
    classes = rng.integers(0, 3, size=6)
    sg2 = uq.sequence_gradients(spec, theta, X, classes)
    gbar = sg2.per_token_grads.mean(axis=0)
    per_cls = [
        nnet.per_sample_prob_grads(spec, theta, X[classes == c], c)[1]
        for c in range(3) if (classes == c).any()
    ]
    gbar_batch = np.concatenate(per_cls, axis=0).mean(axis=0)
    # token order differs between the two paths; the mean is order-free
    err_lin = _rel_l2(gbar_batch, gbar)
    fd = _fd_grad(
        lambda t: float(np.mean([nnet.predict_prob(spec, t, x, int(c)) for x, c in zip(X, classes)])),
        theta,
    )
    err_fd = _rel_l2(gbar, fd)

    # isotropic covariance scaling; power-of-two scales keep floats exact
    g = rng.standard_normal(24)
    F0 = np.zeros((24, 24))
    exact = all(
        uq.laplace_epistemic(g, F0, 1.0 / s2) == s2 * uq.epistemic_gradient_norm(g)
        for s2 in (4.0, 0.25, 16.0)
    )

    # softmax closure: class-probability gradients sum to zero
    closure = 0.0
    for _ in range(5):
        x = rng.standard_normal(2)
        total = sum(nnet.grad_prob(spec, theta, x, c) for c in range(3))
        closure = max(closure, float(np.abs(total).max()))

    ok = err_cross < 1e-12 and err_lin < 1e-10 and err_fd < 1e-5 and exact and closure < 1e-12
    assert _line(
        "09 algebraic identities", ok,
        f"cross {err_cross:.1e}, linearity {err_lin:.1e}, fd {err_fd:.1e}, "
        f"scaling exact {exact}, closure {closure:.1e}",
    )


# ---------------------------------------------------------------------------
# 10. statistics oracles

def test_10_statistics_oracles():
    t0 = time.perf_counter()
    r = stats.pearson([1.0, 2.0, 3.0, 4.0], [1.0, 3.0, 2.0, 5.0])
    pearson_err = abs(r - 5.5 / np.sqrt(43.75))
    t, p, dof = stats.welch_t([1.0, 2.0, 3.0], [2.0, 3.0, 4.0])
    welch_err = max(abs(t + np.sqrt(1.5)), abs(dof - 4.0), abs(p - 0.2879))

    rng = np.random.default_rng(424242)
    hits = 0
    sims = 1500
    for k in range(sims):
        sample = rng.normal(0.0, 1.0, 150)
        lo, hi = stats.bootstrap_ci(sample, "mean", n_resamples=800, level=0.95, seed=k)
        hits += lo <= 0.0 <= hi
    coverage = hits / sims
    elapsed = time.perf_counter() - t0
    ok = pearson_err < 1e-3 and welch_err < 1e-3 and 0.93 <= coverage <= 0.97 and elapsed < 60.0
    assert _line(
        "10 statistics oracles", ok,
        f"pearson err {pearson_err:.1e}, welch err {welch_err:.1e}, "
        f"coverage {coverage:.3f}, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 11. byte-level determinism of emitted artifacts

_SMALL = {
    "hmc.warmup_iters": "60",
    "hmc.sample_iters": "60",
    "hmc.chains": "2",
    "hmc.leapfrog_steps": "12",
    "train.max_iters": "400",
    "data.n_per_class": "40",
    "eval.grid_axis": "6",
    "eval.holdout": "14",
    "grid.resolution": "24",
}


def _run_cli(command, out_dir, extra=()):
    argv = [command, "--out", str(out_dir), "--seed", "3", "--quiet", *extra]
    for key, value in _SMALL.items():
        argv += ["--set", f"{key}={value}"]
    assert cli.run(cli.parse_args(argv)) == 0


def test_11_determinism(tmp_path):
    for command, names in (
        ("validate", ["report.csv", "config.txt"]),
        ("map", ["linear-gn.pgm", "linear-laplace.pgm", "linear-aleatoric-point.pgm"]),
    ):
        a, b = tmp_path / f"{command}-a", tmp_path / f"{command}-b"
        _run_cli(command, a, ("--problems", "linear"))
        _run_cli(command, b, ("--problems", "linear"))
        for name in names:
            if (a / name).read_bytes() != (b / name).read_bytes():
                assert _line("11 determinism", False, f"{command}/{name} differs")
    assert _line("11 determinism", True, "validate csv and map pgm byte-identical")

"""Experiment pipelines and report emission.

Each ``run_*`` function is a pure function of (config, seed): it generates
data, trains the MAP model, runs the HMC reference where needed, evaluates
the estimators on a shared evaluation set, and returns an
:class:`ExperimentReport` whose rows use a fixed metric vocabulary. One
problem failing is recorded as an error row; the remaining problems still
run. Emission (CSV, PGM) canonicalizes ordering so equal configs give
byte-identical files.
"""

import logging
import math
import zlib
from dataclasses import dataclass, field, fields, is_dataclass, replace

import numpy as np

from . import nnet, refpost, stats, synthgen, trainmap, uq

log = logging.getLogger("gnuq.bench")

METRICS = (
    "pearson",
    "spearman",
    "ratio_top_bottom",
    "welch_t",
    "welch_p",
    "cohens_d",
    "eig_min",
    "eig_max",
    "eig_ratio",
    "param_count",
    "accuracy",
    "draws",
    "error",
)

CLASSIFICATION_PROBLEMS = (
    "linear",
    "xor",
    "rings-binary",
    "clusters",
    "spirals",
    "rings-multi",
)
REGRESSION_PROBLEMS = ("regression-linear", "regression-nonlinear")
PROXY_PROBLEMS = ("linear", "xor", "rings")

FISHER_MAX_DIM = uq.FISHER_MAX_DIM


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class DataConfig:
    n_per_class: int = 200
    n_regression: int = 100
    class_count: int = 4
    linear_margin: float = 0.3
    xor_noise: float = 0.5
    rings_noise: float = 0.15
    clusters_spread: float = 0.15
    spirals_noise: float = 0.3
    regression_noise: float = 0.3


@dataclass(frozen=True)
class GridConfig:
    resolution: int = 100  # map rendering, per axis
    expand: float = 0.2    # bounding-box expansion fraction


@dataclass(frozen=True)
class EvalConfig:
    grid_axis: int = 16    # correlation grid is grid_axis^2 points
    holdout: int = 144     # held-out draws from the data distribution
    expand: float = 0.0    # eval-grid margin beyond the data bounding box


@dataclass(frozen=True)
class ScalingConfig:
    levels: int = 7
    halve_draws_above_dim: int = 5000


@dataclass(frozen=True)
class BenchConfig:
    data: DataConfig = field(default_factory=DataConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    train: trainmap.TrainConfig = field(default_factory=trainmap.TrainConfig)
    hmc: refpost.HmcConfig = field(default_factory=refpost.HmcConfig)


def apply_overrides(config: BenchConfig, overrides: dict) -> BenchConfig:
    """New config with dotted ``section.key`` overrides applied; values are
    coerced to the field's current type. Unknown keys are rejected."""
    for key in sorted(overrides):
        config = _override_one(config, key.split("."), key, overrides[key])
    return config


def _override_one(obj, parts, full_key, raw):
    name = parts[0]
    if not (is_dataclass(obj) and any(f.name == name for f in fields(obj))):
        raise ValueError(f"unknown config key {full_key!r}")
    cur = getattr(obj, name)
    if len(parts) > 1:
        if not is_dataclass(cur):
            raise ValueError(f"unknown config key {full_key!r}")
        return replace(obj, **{name: _override_one(cur, parts[1:], full_key, raw)})
    if is_dataclass(cur):
        raise ValueError(f"config key {full_key!r} names a section, not a value")
    return replace(obj, **{name: _coerce(cur, raw, full_key)})


def _coerce(cur, raw, key):
    raw = str(raw)
    if isinstance(cur, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"cannot parse {raw!r} as bool for {key!r}")
    if isinstance(cur, int):
        return int(raw)
    if isinstance(cur, float):
        return float(raw)
    if isinstance(cur, str):
        return raw
    raise ValueError(f"config key {key!r} is not overridable")


def config_echo(config: BenchConfig, seed: int) -> str:
    """Flat, sorted ``key=value`` snapshot of the effective configuration."""
    lines = [f"seed={seed}"]

    def walk(prefix, obj):
        for f in fields(obj):
            v = getattr(obj, f.name)
            if is_dataclass(v):
                walk(prefix + f.name + ".", v)
            else:
                lines.append(f"{prefix}{f.name}={v}")

    walk("", config)
    return "\n".join(sorted(lines)) + "\n"


def subseed(master: int, *keys) -> int:
    """Deterministic child seed for (master, purpose...) key paths."""
    ints = [int(master)]
    for k in keys:
        ints.append(zlib.crc32(k.encode("utf-8")) if isinstance(k, str) else int(k))
    return int(np.random.SeedSequence(ints).generate_state(1)[0])


# ---------------------------------------------------------------------------
# problems and models

def _problem_recipe(problem, dc: DataConfig):
    """(generator(n, seed), training size, class count) for a problem name."""
    k = dc.class_count
    if problem == "linear":
        return (
            lambda n, s: synthgen.make_linear2d(n, margin=dc.linear_margin, seed=s),
            2 * dc.n_per_class,
            2,
        )
    if problem == "xor":
        return (
            lambda n, s: synthgen.make_xor2d(n, noise=dc.xor_noise, seed=s),
            2 * dc.n_per_class,
            2,
        )
    if problem in ("rings-binary", "rings"):
        return (
            lambda n, s: synthgen.make_rings2d(n, 2, noise=dc.rings_noise, seed=s),
            2 * dc.n_per_class,
            2,
        )
    if problem == "clusters":
        return (
            lambda n, s: synthgen.make_clusters2d(n, k, spread=dc.clusters_spread, seed=s),
            k * dc.n_per_class,
            k,
        )
    if problem == "spirals":
        return (
            lambda n, s: synthgen.make_spirals2d(n, k, noise=dc.spirals_noise, seed=s),
            k * dc.n_per_class,
            k,
        )
    if problem == "rings-multi":
        return (
            lambda n, s: synthgen.make_rings2d(n, k, noise=dc.rings_noise, seed=s),
            k * dc.n_per_class,
            k,
        )
    if problem == "regression-linear":
        return (
            lambda n, s: synthgen.make_regression1d("linear", n, noise_sd=dc.regression_noise, seed=s),
            dc.n_regression,
            0,
        )
    if problem == "regression-nonlinear":
        return (
            lambda n, s: synthgen.make_regression1d("nonlinear", n, noise_sd=dc.regression_noise, seed=s),
            dc.n_regression,
            0,
        )
    raise ValueError(f"unknown problem {problem!r}")


def model_for_problem(problem, class_count=4) -> nnet.MlpSpec:
    if problem == "linear":
        return nnet.MlpSpec(2, (), 1)
    if problem in ("xor", "rings-binary", "rings"):
        return nnet.MlpSpec(2, (8, 8), 1)
    if problem == "clusters":
        return nnet.MlpSpec(2, (), class_count, head=nnet.HEAD_SOFTMAX)
    if problem in ("spirals", "rings-multi"):
        return nnet.MlpSpec(2, (16, 16), class_count, head=nnet.HEAD_SOFTMAX)
    if problem == "regression-linear":
        return nnet.MlpSpec(1, (), 1, head=nnet.HEAD_IDENTITY)
    if problem == "regression-nonlinear":
        return nnet.MlpSpec(1, (32,), 1, head=nnet.HEAD_IDENTITY)
    raise ValueError(f"unknown problem {problem!r}")


# two hidden layers of 32: 3*32 + 33*32 + 33 = 1185 parameters exactly
PROXY_HIDDEN = (32, 32)


def model_name(spec: nnet.MlpSpec) -> str:
    if not spec.hidden_widths:
        return {
            nnet.HEAD_BINARY: "logreg",
            nnet.HEAD_SOFTMAX: "softmaxreg",
            nnet.HEAD_IDENTITY: "linreg",
        }[spec.head]
    return "mlp-" + "-".join(str(w) for w in spec.hidden_widths)


def default_scaling_ladder(levels=7):
    """Single-logit binary models of increasing size, 3 to 66817 parameters."""
    widths = (None, 8, 16, 32, 64, 128, 256)
    if not 1 <= levels <= len(widths):
        raise ValueError(f"levels must be in 1..{len(widths)}")
    out = []
    for w in widths[:levels]:
        out.append(nnet.MlpSpec(2, () if w is None else (w, w), 1))
    return out


# ---------------------------------------------------------------------------
# evaluation geometry

@dataclass(frozen=True)
class EvalGrid:
    """Rectangular grid: x1_range/x2_range are (lo, hi); x2_range None for 1D."""

    x1_range: tuple
    x2_range: tuple = None
    resolution: int = 100

    def __post_init__(self):
        object.__setattr__(self, "x1_range", tuple(float(v) for v in self.x1_range))
        if self.x2_range is not None:
            object.__setattr__(self, "x2_range", tuple(float(v) for v in self.x2_range))
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        for rng in (self.x1_range, self.x2_range):
            if rng is None:
                continue
            if len(rng) != 2 or not all(math.isfinite(v) for v in rng):
                raise ValueError("ranges must be finite (lo, hi) pairs")
            if not rng[0] < rng[1]:
                raise ValueError("ranges must be nondegenerate")

    @classmethod
    def from_dataset(cls, dataset, resolution=100, expand=0.2):
        """Bounding box of the inputs, widened by ``expand`` of each span."""
        X = np.atleast_2d(np.asarray(dataset.inputs, dtype=np.float64))
        ranges = []
        for j in range(X.shape[1]):
            lo, hi = float(X[:, j].min()), float(X[:, j].max())
            pad = expand * (hi - lo) / 2.0
            ranges.append((lo - pad, hi + pad))
        if X.shape[1] == 1:
            return cls(ranges[0], None, resolution)
        return cls(ranges[0], ranges[1], resolution)

    def axes(self):
        xs = np.linspace(*self.x1_range, self.resolution)
        ys = None if self.x2_range is None else np.linspace(*self.x2_range, self.resolution)
        return xs, ys

    def points(self):
        xs, ys = self.axes()
        if ys is None:
            return xs[:, None]
        XX, YY = np.meshgrid(xs, ys)
        return np.column_stack([XX.ravel(), YY.ravel()])


def evaluation_points(dataset, config: BenchConfig, holdout_seed, make):
    """Correlation evaluation set: a coarse grid over the data bounding box
    plus fresh held-out draws from the same generator.

    The grid margin is ``eval.expand`` (default 0: the box itself), not the
    map-rendering margin. Correlations against a sampled reference degrade
    into rank noise far outside the data, where the MAP saturates and the
    posterior variance is prior- and sampler-radius-limited, so the eval
    set stays on the box while rendered maps keep their wider framing.
    """
    dim = np.atleast_2d(dataset.inputs).shape[1]
    res = config.eval.grid_axis if dim == 2 else config.eval.grid_axis ** 2
    grid = EvalGrid.from_dataset(dataset, resolution=res, expand=config.eval.expand)
    held = make(config.eval.holdout, holdout_seed)
    return np.vstack([grid.points(), np.atleast_2d(held.inputs)])


# ---------------------------------------------------------------------------
# report plumbing

@dataclass(frozen=True)
class ReportRow:
    problem: str
    model: str
    estimator: str
    metric_name: str
    value: float

    def __post_init__(self):
        if self.metric_name not in METRICS:
            raise ValueError(f"metric {self.metric_name!r} not in the vocabulary")
        for name in ("problem", "model", "estimator", "metric_name"):
            text = getattr(self, name)
            if "," in text or "\n" in text:
                raise ValueError(f"{name} must not contain commas or newlines")
        object.__setattr__(self, "value", float(self.value))


@dataclass
class ExperimentReport:
    rows: list
    config_echo: str
    seed: int

    def lookup(self, **criteria):
        return [
            r for r in self.rows
            if all(getattr(r, k) == v for k, v in criteria.items())
        ]

    def value(self, **criteria) -> float:
        hits = self.lookup(**criteria)
        if len(hits) != 1:
            raise KeyError(f"{criteria} matched {len(hits)} rows")
        return hits[0].value

    @property
    def error_rows(self):
        return self.lookup(metric_name="error")


def _error_row(problem, model, exc):
    log.warning("problem %s failed: %s: %s", problem, type(exc).__name__, exc)
    return ReportRow(problem, model, type(exc).__name__, "error", 1.0)


def _corr_rows(problem, model, estimator, est_vals, ref_vals):
    return [
        ReportRow(problem, model, estimator, "pearson", stats.pearson(est_vals, ref_vals)),
        ReportRow(problem, model, estimator, "spearman", stats.spearman(est_vals, ref_vals)),
    ]


# ---------------------------------------------------------------------------
# pipelines

def _fit_and_sample(problem, spec, ds, config, seed, namespace=()):
    tcfg = replace(config.train, seed=subseed(seed, *namespace, problem, "init"))
    theta, trep = trainmap.train_map(spec, ds, tcfg)
    log.info(
        "%s/%s trained: loss=%.4g grad=%.2g iters=%d",
        problem, model_name(spec), trep.final_loss, trep.final_grad_norm, trep.iters_used,
    )
    post = refpost.PosteriorLogDensity(spec, ds, tcfg.prior_precision)
    hcfg = replace(config.hmc, seed=subseed(seed, *namespace, problem, "hmc"))
    samples = refpost.hmc_sample(post, theta, hcfg)
    log.info(
        "%s/%s sampled: accept=%.3f eps=%.3g div=%d",
        problem, model_name(spec), samples.accept_rate,
        samples.adapted_step_size, samples.divergences,
    )
    return theta, trep, samples


def _validate_one(problem, config, seed):
    make, n_train, n_classes = _problem_recipe(problem, config.data)
    spec = model_for_problem(problem, config.data.class_count)
    mname = model_name(spec)
    ds = make(n_train, subseed(seed, problem, "data"))
    theta, trep, samples = _fit_and_sample(problem, spec, ds, config, seed)
    pts = evaluation_points(ds, config, subseed(seed, problem, "holdout"), make)

    P = refpost.posterior_outputs(samples, spec, pts)  # (S, n, K)
    ref_epi = P.var(axis=0, ddof=1)
    ref_ale = (P * (1.0 - P)).mean(axis=0)
    probs = nnet.probs_batch(spec, theta, pts)

    lam = config.train.prior_precision
    F = uq.empirical_fisher(spec, theta, ds)
    cf = None

    multiclass = spec.head == nnet.HEAD_SOFTMAX
    classes = list(range(spec.output_dim)) if multiclass else [1]
    pooled = {"gn": [], "laplace": [], "aleatoric-point": [], "ref-epi": [], "ref-ale": []}
    rows = []
    for c in classes:
        _, gn = nnet.gradnorm_batch(spec, theta, pts, c)
        _, G = nnet.per_sample_prob_grads(spec, theta, pts, c)
        la, cf = uq.laplace_quadratic_batch(G, F, lam, cf)
        ale = probs[:, c] * (1.0 - probs[:, c])
        pooled["gn"].append(gn)
        pooled["laplace"].append(la)
        pooled["aleatoric-point"].append(ale)
        pooled["ref-epi"].append(ref_epi[:, c])
        pooled["ref-ale"].append(ref_ale[:, c])
        if multiclass:
            rows += _corr_rows(problem, mname, f"gn:c{c}", gn, ref_epi[:, c])
            rows += _corr_rows(problem, mname, f"laplace:c{c}", la, ref_epi[:, c])
            rows += _corr_rows(problem, mname, f"aleatoric-point:c{c}", ale, ref_ale[:, c])

    gn_all = np.concatenate(pooled["gn"])
    la_all = np.concatenate(pooled["laplace"])
    ale_all = np.concatenate(pooled["aleatoric-point"])
    repi_all = np.concatenate(pooled["ref-epi"])
    rale_all = np.concatenate(pooled["ref-ale"])
    rows += _corr_rows(problem, mname, "gn", gn_all, repi_all)
    rows += _corr_rows(problem, mname, "laplace", la_all, repi_all)
    rows += _corr_rows(problem, mname, "aleatoric-point", ale_all, rale_all)
    rows += _corr_rows(problem, mname, "gn-vs-laplace", gn_all, la_all)
    rows.append(ReportRow(problem, mname, "map", "accuracy", trep.train_accuracy))
    rows.append(ReportRow(problem, mname, "map", "param_count", nnet.param_count(spec)))
    return rows


def run_validation_classification(problems=CLASSIFICATION_PROBLEMS, config=None, seed=0):
    """Estimator-vs-reference correlations on the 2D classification suite."""
    config = config if config is not None else BenchConfig()
    problems = tuple(problems)
    for p in problems:
        if p not in CLASSIFICATION_PROBLEMS:
            raise ValueError(f"unknown classification problem {p!r}")
    if len(set(problems)) != len(problems):
        raise ValueError("duplicate problems in list")
    rows = []
    for problem in problems:
        try:
            rows += _validate_one(problem, config, seed)
        except Exception as exc:
            spec = model_for_problem(problem, config.data.class_count)
            rows.append(_error_row(problem, model_name(spec), exc))
    return ExperimentReport(rows, config_echo(config, seed), seed)


def _regress_one(problem, config, seed):
    make, n_train, _ = _problem_recipe(problem, config.data)
    spec = model_for_problem(problem)
    mname = model_name(spec)
    ds = make(n_train, subseed(seed, problem, "data"))
    theta, trep, samples = _fit_and_sample(problem, spec, ds, config, seed)
    pts = evaluation_points(ds, config, subseed(seed, problem, "holdout"), make)

    outs = refpost.posterior_outputs(samples, spec, pts)[:, :, 0]
    ref_epi = outs.var(axis=0, ddof=1)
    _, gn = nnet.gradnorm_batch(spec, theta, pts)
    lam = config.train.prior_precision
    F = uq.empirical_fisher(spec, theta, ds)
    _, G = nnet.per_sample_prob_grads(spec, theta, pts)
    la, _ = uq.laplace_quadratic_batch(G, F, lam)

    rows = _corr_rows(problem, mname, "gn", gn, ref_epi)
    rows += _corr_rows(problem, mname, "laplace", la, ref_epi)
    eig_min, eig_max, eig_ratio = hessian_spectrum(F, lam)
    rows.append(ReportRow(problem, mname, "fisher", "eig_min", eig_min))
    rows.append(ReportRow(problem, mname, "fisher", "eig_max", eig_max))
    rows.append(ReportRow(problem, mname, "fisher", "eig_ratio", eig_ratio))
    rows.append(ReportRow(problem, mname, "map", "param_count", nnet.param_count(spec)))
    return rows


def run_validation_regression(config=None, seed=0):
    """1D regression: correlations plus curvature anisotropy of the damped
    Fisher at the trained parameters."""
    config = config if config is not None else BenchConfig()
    rows = []
    for problem in REGRESSION_PROBLEMS:
        try:
            rows += _regress_one(problem, config, seed)
        except Exception as exc:
            rows.append(_error_row(problem, model_name(model_for_problem(problem)), exc))
    return ExperimentReport(rows, config_echo(config, seed), seed)


def _scale_one(spec, index, ds, pts, config, seed):
    problem = "rings-binary"
    mname = model_name(spec)
    D = nnet.param_count(spec)
    tcfg = replace(config.train, seed=subseed(seed, "scaling", "init", index))
    theta, trep = trainmap.train_map(spec, ds, tcfg)
    log.info("scaling %s (D=%d): loss=%.4g iters=%d", mname, D, trep.final_loss, trep.iters_used)

    hcfg = config.hmc
    if D > config.scaling.halve_draws_above_dim:
        hcfg = replace(
            hcfg,
            warmup_iters=max(1, hcfg.warmup_iters // 2),
            sample_iters=max(1, hcfg.sample_iters // 2),
        )
    hcfg = replace(hcfg, seed=subseed(seed, "scaling", "hmc", index))
    post = refpost.PosteriorLogDensity(spec, ds, tcfg.prior_precision)
    samples = refpost.hmc_sample(post, theta, hcfg)
    log.info("scaling %s sampled: accept=%.3f", mname, samples.accept_rate)

    P = refpost.posterior_outputs(samples, spec, pts)[:, :, 1]
    ref_epi = P.var(axis=0, ddof=1)
    ref_ale = (P * (1.0 - P)).mean(axis=0)
    _, gn = nnet.gradnorm_batch(spec, theta, pts, 1)
    p1 = nnet.probs_batch(spec, theta, pts)[:, 1]

    rows = _corr_rows(problem, mname, "gn", gn, ref_epi)
    rows += _corr_rows(problem, mname, "aleatoric-point", p1 * (1.0 - p1), ref_ale)
    rows.append(ReportRow(problem, mname, "map", "accuracy", trep.train_accuracy))
    rows.append(ReportRow(problem, mname, "map", "param_count", D))
    # any budget reduction at large D must be visible in the report itself
    rows.append(ReportRow(problem, mname, "hmc", "draws", hcfg.chains * hcfg.sample_iters))
    return rows


def run_scaling(model_ladder=None, config=None, seed=0):
    """Correlation as a function of model size on the binary rings problem.

    All ladder entries share one dataset and evaluation set; HMC budgets are
    halved above ``scaling.halve_draws_above_dim`` parameters.
    """
    config = config if config is not None else BenchConfig()
    ladder = list(model_ladder) if model_ladder is not None else default_scaling_ladder(config.scaling.levels)
    counts = [nnet.param_count(s) for s in ladder]
    if counts != sorted(counts):
        raise ValueError("ladder must be ordered by param_count")

    make, n_train, _ = _problem_recipe("rings-binary", config.data)
    ds = make(n_train, subseed(seed, "scaling", "data"))
    pts = evaluation_points(ds, config, subseed(seed, "scaling", "holdout"), make)
    rows = []
    for i, spec in enumerate(ladder):
        try:
            rows += _scale_one(spec, i, ds, pts, config, seed)
        except Exception as exc:
            rows.append(_error_row("rings-binary", model_name(spec), exc))
    return ExperimentReport(rows, config_echo(config, seed), seed)


def _top_mask(grid: EvalGrid, axis, threshold):
    xs, ys = grid.axes()
    vals = ys if axis == 1 else xs
    return vals > threshold


def _proxy_one(problem, config, seed, swap_halves):
    make, n_train, _ = _problem_recipe(problem, config.data)
    spec = nnet.MlpSpec(2, PROXY_HIDDEN, 1)
    mname = model_name(spec)
    ds = make(n_train, subseed(seed, "proxy", problem, "data"))
    tcfg = replace(config.train, seed=subseed(seed, "proxy", problem, "init"))
    theta, trep = trainmap.train_map(spec, ds, tcfg)
    log.info("proxy %s trained: loss=%.4g acc=%.3f", problem, trep.final_loss, trep.train_accuracy)

    axis, threshold = 1, 0.0
    top, bottom = synthgen.split_by_halfplane(ds, axis, threshold)
    half_a, half_b = (bottom, top) if swap_halves else (top, bottom)
    lam = tcfg.prior_precision
    F_a = uq.empirical_fisher(spec, theta, half_a)
    F_b = uq.empirical_fisher(spec, theta, half_b)

    grid = EvalGrid.from_dataset(ds, resolution=config.grid.resolution, expand=config.grid.expand)
    m_id = uq.uncertainty_map(spec, theta, grid, "gn")
    m_a = uq.uncertainty_map(spec, theta, grid, "laplace", cov=uq.CovarianceModel.damped_fisher(F_a, lam))
    m_b = uq.uncertainty_map(spec, theta, grid, "laplace", cov=uq.CovarianceModel.damped_fisher(F_b, lam))
    n_id, n_a, n_b = (uq.normalize_map(m) for m in (m_id, m_a, m_b))

    top2d = np.broadcast_to(_top_mask(grid, axis, threshold)[:, None], m_id.values.shape)

    def ratio(m):
        return float(m.values[top2d].mean() / m.values[~top2d].mean())

    rows = [
        ReportRow(problem, mname, "gn", "ratio_top_bottom", ratio(n_id)),
        ReportRow(problem, mname, "laplace-a", "ratio_top_bottom", ratio(n_a)),
        ReportRow(problem, mname, "laplace-b", "ratio_top_bottom", ratio(n_b)),
    ]

    # Welch/Cohen statistics on the raw log-ratio; cells where either raw map
    # is zero are excluded from both groups (the exclusion is symmetric in A
    # and B, and log A - log B keeps the half swap an exact negation).
    with np.errstate(divide="ignore"):
        lr = np.log(m_a.values) - np.log(m_b.values)
    ok = np.isfinite(lr)
    t, p, _ = stats.welch_t(lr[ok & top2d], lr[ok & ~top2d])
    d = stats.cohens_d(lr[ok & top2d], lr[ok & ~top2d])
    rows += [
        ReportRow(problem, mname, "logratio", "welch_t", t),
        ReportRow(problem, mname, "logratio", "welch_p", p),
        ReportRow(problem, mname, "logratio", "cohens_d", d),
        ReportRow(problem, mname, "map", "accuracy", trep.train_accuracy),
        ReportRow(problem, mname, "map", "param_count", nnet.param_count(spec)),
    ]

    # display-only log-ratio map: min-max over the finite cells, excluded
    # cells pinned to the nearest end
    if ok.any() and lr[ok].max() > lr[ok].min():
        lo, hi = lr[ok].min(), lr[ok].max()
        disp = np.clip((np.nan_to_num(lr, nan=lo, posinf=hi, neginf=lo) - lo) / (hi - lo), 0.0, 1.0)
    else:
        disp = np.zeros_like(lr)
    maps = {
        "gn": n_id,
        "laplace-a": n_a,
        "laplace-b": n_b,
        "logratio": uq.UncertaintyMap(m_id.grid_xs, m_id.grid_ys, disp, "logratio", True),
    }
    return rows, maps


def run_proxy_bias(problems=PROXY_PROBLEMS, config=None, seed=0, swap_halves=False):
    """Fisher-from-half-data bias experiment.

    Trains one model per problem on the full data, builds damped Fishers
    from the top and bottom halves (A and B; ``swap_halves`` exchanges the
    roles), and compares the normalized Laplace maps against the isotropic
    one. Returns (report, {problem: {name: UncertaintyMap}}).
    """
    config = config if config is not None else BenchConfig()
    problems = tuple(problems)
    for p in problems:
        if p not in PROXY_PROBLEMS:
            raise ValueError(f"unknown proxy-bias problem {p!r}")
    if len(set(problems)) != len(problems):
        raise ValueError("duplicate problems in list")
    rows, maps = [], {}
    for problem in problems:
        try:
            prows, pmaps = _proxy_one(problem, config, seed, swap_halves)
            rows += prows
            maps[problem] = pmaps
        except Exception as exc:
            rows.append(_error_row(problem, model_name(nnet.MlpSpec(2, PROXY_HIDDEN, 1)), exc))
    return ExperimentReport(rows, config_echo(config, seed), seed), maps


def _map_one(problem, config, seed):
    make, n_train, _ = _problem_recipe(problem, config.data)
    spec = model_for_problem(problem, config.data.class_count)
    mname = model_name(spec)
    ds = make(n_train, subseed(seed, problem, "data"))
    tcfg = replace(config.train, seed=subseed(seed, problem, "init"))
    theta, trep = trainmap.train_map(spec, ds, tcfg)
    lam = tcfg.prior_precision
    F = uq.empirical_fisher(spec, theta, ds)
    grid = EvalGrid.from_dataset(ds, resolution=config.grid.resolution, expand=config.grid.expand)
    maps = {
        "gn": uq.normalize_map(uq.uncertainty_map(spec, theta, grid, "gn")),
        "laplace": uq.normalize_map(
            uq.uncertainty_map(spec, theta, grid, "laplace", cov=uq.CovarianceModel.damped_fisher(F, lam))
        ),
        "aleatoric-point": uq.normalize_map(uq.uncertainty_map(spec, theta, grid, "aleatoric-point")),
    }
    rows = [
        ReportRow(problem, mname, "map", "accuracy", trep.train_accuracy),
        ReportRow(problem, mname, "map", "param_count", nnet.param_count(spec)),
    ]
    return rows, maps, ds


def run_maps(problems=CLASSIFICATION_PROBLEMS, config=None, seed=0):
    """Normalized uncertainty maps (class 1) for the 2D problems.

    Returns (report, {problem: {estimator: map}}, {problem: dataset}).
    """
    config = config if config is not None else BenchConfig()
    problems = tuple(problems)
    for p in problems:
        if p not in CLASSIFICATION_PROBLEMS:
            raise ValueError(f"unknown map problem {p!r}")
    if len(set(problems)) != len(problems):
        raise ValueError("duplicate problems in list")
    rows, maps, datasets = [], {}, {}
    for problem in problems:
        try:
            prows, pmaps, ds = _map_one(problem, config, seed)
            rows += prows
            maps[problem] = pmaps
            datasets[problem] = ds
        except Exception as exc:
            spec = model_for_problem(problem, config.data.class_count)
            rows.append(_error_row(problem, model_name(spec), exc))
    return ExperimentReport(rows, config_echo(config, seed), seed), maps, datasets


# ---------------------------------------------------------------------------
# spectra and emission

def hessian_spectrum(fisher, lam):
    """(eig_min, eig_max, ratio) of F + lam*I by full symmetric eigensolve."""
    F = np.asarray(fisher, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError("fisher must be square")
    if F.shape[0] > FISHER_MAX_DIM:
        raise ValueError(f"dense spectrum capped at D <= {FISHER_MAX_DIM}")
    if not np.allclose(F, F.T, atol=1e-10, rtol=0.0):
        raise ValueError("fisher must be symmetric")
    w = np.linalg.eigvalsh(F + float(lam) * np.eye(F.shape[0]))
    return float(w[0]), float(w[-1]), float(w[-1] / w[0])


def _fmt(v) -> str:
    return format(float(v), ".17g")


def emit_csv(report: ExperimentReport, path):
    """problem,model,estimator,metric_name,value,seed; rows sorted
    lexicographically; UTF-8, LF, 17 significant digits."""
    lines = sorted(
        f"{r.problem},{r.model},{r.estimator},{r.metric_name},{_fmt(r.value)},{report.seed}"
        for r in report.rows
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("problem,model,estimator,metric_name,value,seed\n")
        for line in lines:
            fh.write(line + "\n")


def parse_csv(path):
    """Rows back from emit_csv output: list of (ReportRow, seed)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "problem,model,estimator,metric_name,value,seed":
            raise ValueError("unrecognized report header")
        for line in fh:
            prob, model, est, metric, value, seed = line.rstrip("\n").split(",")
            out.append((ReportRow(prob, model, est, metric, float(value)), int(seed)))
    return out


def emit_map_image(m: uq.UncertaintyMap, path):
    """Binary PGM (P5, maxval 255) of a normalized 2D map; rows run
    top-to-bottom in decreasing x2."""
    if not m.normalized:
        raise ValueError("only normalized maps are rendered")
    if m.grid_ys.size == 0:
        raise ValueError("1D maps have no image form; use emit_map_csv")
    if m.values.max() > 1.0:
        raise ValueError("normalized map values must lie in [0, 1]")
    img = np.rint(255.0 * m.values[::-1]).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def emit_map_csv(m: uq.UncertaintyMap, path):
    """Grid values as CSV: x1,value for 1D maps, x1,x2,value for 2D."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if m.grid_ys.size == 0:
            fh.write("x1,value\n")
            for x, v in zip(m.grid_xs, m.values[0]):
                fh.write(f"{_fmt(x)},{_fmt(v)}\n")
            return
        fh.write("x1,x2,value\n")
        for iy, y in enumerate(m.grid_ys):
            for ix, x in enumerate(m.grid_xs):
                fh.write(f"{_fmt(x)},{_fmt(y)},{_fmt(m.values[iy, ix])}\n")

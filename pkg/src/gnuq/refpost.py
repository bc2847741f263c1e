"""Hamiltonian Monte Carlo reference posterior.

Samples theta from the unnormalized posterior of a trained model and turns
the draws into the Monte Carlo ground-truth quantities the estimators are
judged against: Var_theta[p] (epistemic) and E_theta[p(1-p)] (aleatoric).

The sampler is plain leapfrog HMC with a Metropolis correction. Step size
is tuned during warmup by dual averaging toward ``target_accept`` and
frozen afterwards; the number of leapfrog steps is jittered +-20% around
the configured value each iteration to avoid resonant orbits. Chains are
initialized at the supplied point plus N(0, 0.01 I) jitter and run on
independent substreams, so results do not depend on chain scheduling.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import nnet

# dual-averaging constants (the usual values for this scheme)
_DA_GAMMA = 0.05
_DA_T0 = 10.0
_DA_KAPPA = 0.75

_INIT_JITTER_SD = 0.1
_EPS_SEARCH_CAP = 60


class HmcDiverged(RuntimeError):
    """Warmup diverged too often to adapt a usable step size."""


@dataclass
class PosteriorLogDensity:
    """Unnormalized log posterior of a model on a dataset.

    value = -n * (mean NLL + (prior_precision/2) ||theta||^2), i.e. the
    negated training objective scaled by the dataset size, so the trained
    parameter vector is exactly the posterior mode.
    """

    spec: nnet.MlpSpec
    dataset: object
    prior_precision: float

    def __post_init__(self):
        self.prior_precision = float(self.prior_precision)
        if self.prior_precision <= 0:
            raise ValueError("prior_precision must be positive")
        self._X, self._y = nnet.dataset_arrays(self.spec, self.dataset)

    @property
    def dim(self) -> int:
        return nnet.param_count(self.spec)

    def value_and_grad(self, theta):
        loss, grad = nnet.loss_and_grad(
            self.spec, theta, self._X, self._y, self.prior_precision
        )
        n = self._X.shape[0]
        return -n * loss, -n * grad


@dataclass
class StandardNormalTarget:
    """log density -||theta||^2 / 2, the calibration target with known moments."""

    dim: int

    def value_and_grad(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        return float(-0.5 * (theta @ theta)), -theta


@dataclass
class HmcConfig:
    warmup_iters: int = 1000
    sample_iters: int = 1000
    chains: int = 4
    leapfrog_steps: int = 32
    target_accept: float = 0.8
    seed: int = 0

    def __post_init__(self):
        for name in ("warmup_iters", "sample_iters", "chains", "leapfrog_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class PosteriorSamples:
    """Pooled post-warmup draws, stacked chain-major: (chains * sample_iters, D)."""

    draws: np.ndarray
    accept_rate: float
    adapted_step_size: float
    per_chain_mean_log_density: np.ndarray
    seed: int = 0
    divergences: int = 0

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=np.float64))
        self.per_chain_mean_log_density = np.asarray(
            self.per_chain_mean_log_density, dtype=np.float64
        ).ravel()
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("draws must be finite")
        if not 0.0 <= self.accept_rate <= 1.0:
            raise ValueError("accept_rate must lie in [0, 1]")
        if self.adapted_step_size <= 0:
            raise ValueError("adapted_step_size must be positive")

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]


def _leapfrog(logdensity, theta, r, eps, steps, grad):
    """One trajectory; returns (theta, r, value, grad, ok). ``grad`` in and
    out is the cached gradient at the corresponding theta. Overflow here is
    an expected divergence signal, not an error."""
    with np.errstate(over="ignore", invalid="ignore"):
        r = r + 0.5 * eps * grad
        val = None
        for i in range(steps):
            theta = theta + eps * r
            val, grad = logdensity.value_and_grad(theta)
            if not (np.isfinite(val) and np.all(np.isfinite(grad))):
                return theta, r, val, grad, False
            if i + 1 < steps:
                r = r + eps * grad
        r = r + 0.5 * eps * grad
    return theta, r, val, grad, True


def _hamiltonian(val, r):
    with np.errstate(over="ignore", invalid="ignore"):
        return -val + 0.5 * float(r @ r)


def _initial_step_size(logdensity, theta, val, grad, rng):
    """Double or halve eps until a single leapfrog step crosses acceptance
    ratio 0.5, starting from eps = 1."""
    r = rng.standard_normal(theta.size)
    h0 = _hamiltonian(val, r)

    def log_ratio(eps):
        th, rr, v, _, ok = _leapfrog(logdensity, theta, r, eps, 1, grad)
        if not ok:
            return -np.inf
        h1 = _hamiltonian(v, rr)
        return h0 - h1 if np.isfinite(h1) else -np.inf

    eps = 1.0
    lr = log_ratio(eps)
    for _ in range(_EPS_SEARCH_CAP):
        if np.isfinite(lr) or eps < 1e-10:
            break
        eps *= 0.5
        lr = log_ratio(eps)
    a = 1.0 if lr > math.log(0.5) else -1.0
    for _ in range(_EPS_SEARCH_CAP):
        eps *= 2.0 ** a
        lr = log_ratio(eps)
        if not a * lr > a * math.log(0.5):
            break
    if not np.isfinite(lr):
        eps *= 0.5
    return float(min(max(eps, 1e-10), 1e3))


def hmc_sample(logdensity, init, config: HmcConfig) -> PosteriorSamples:
    """Run ``config.chains`` independent HMC chains from jittered ``init``.

    Deterministic given ``config.seed``: each chain draws from its own
    substream, and within an iteration the order of random draws is fixed
    (trajectory length, momentum, acceptance uniform). A non-finite
    Hamiltonian rejects the step and counts as a divergence; a chain whose
    warmup diverges more than half the time aborts the run.
    """
    init = np.ascontiguousarray(init, dtype=np.float64).ravel()
    if not np.all(np.isfinite(init)):
        raise ValueError("init must be finite")
    dim = getattr(logdensity, "dim", init.size)
    if init.size != dim:
        raise ValueError(f"init has {init.size} entries, target wants {dim}")

    L0 = config.leapfrog_steps
    L_lo = max(1, math.ceil(0.8 * L0))
    L_hi = max(L_lo, math.floor(1.2 * L0))
    delta = config.target_accept

    draws = np.empty((config.chains * config.sample_iters, dim))
    logps = np.empty(config.chains * config.sample_iters)
    chain_eps = np.empty(config.chains)
    accepted = 0
    divergences = 0

    for chain, ss in enumerate(np.random.SeedSequence(config.seed).spawn(config.chains)):
        rng = np.random.default_rng(ss)
        theta = init + _INIT_JITTER_SD * rng.standard_normal(dim)
        val, grad = logdensity.value_and_grad(theta)
        if not (np.isfinite(val) and np.all(np.isfinite(grad))):
            raise ValueError("log density not finite at the jittered start point")

        eps = _initial_step_size(logdensity, theta, val, grad, rng)
        mu = math.log(10.0 * eps)
        log_eps_bar = 0.0
        h_bar = 0.0
        warm_div = 0
        base = chain * config.sample_iters

        for it in range(config.warmup_iters + config.sample_iters):
            warm = it < config.warmup_iters
            L = int(rng.integers(L_lo, L_hi + 1))
            r0 = rng.standard_normal(dim)
            u = rng.random()
            h0 = _hamiltonian(val, r0)

            theta_p, r_p, val_p, grad_p, ok = _leapfrog(
                logdensity, theta, r0, eps, L, grad
            )
            if ok:
                h1 = _hamiltonian(val_p, r_p)
                ok = bool(np.isfinite(h1))
            if ok:
                alpha = math.exp(min(0.0, h0 - h1))
            else:
                alpha = 0.0
                divergences += 1
                if warm:
                    warm_div += 1
            if u < alpha:
                theta, val, grad = theta_p, val_p, grad_p
                if not warm:
                    accepted += 1

            if warm:
                m = it + 1
                w = 1.0 / (m + _DA_T0)
                h_bar = (1.0 - w) * h_bar + w * (delta - alpha)
                log_eps = mu - math.sqrt(m) / _DA_GAMMA * h_bar
                eta = m ** (-_DA_KAPPA)
                log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar
                eps = math.exp(log_eps)
                if m == config.warmup_iters:
                    if 2 * warm_div > config.warmup_iters:
                        raise HmcDiverged(
                            f"chain {chain}: {warm_div}/{config.warmup_iters} "
                            f"warmup iterations diverged; step size is not adaptable"
                        )
                    eps = math.exp(log_eps_bar)
            else:
                k = base + (it - config.warmup_iters)
                draws[k] = theta
                logps[k] = val
        chain_eps[chain] = eps

    per_chain = logps.reshape(config.chains, config.sample_iters).mean(axis=1)
    return PosteriorSamples(
        draws=draws,
        accept_rate=accepted / (config.chains * config.sample_iters),
        adapted_step_size=float(chain_eps.mean()),
        per_chain_mean_log_density=per_chain,
        seed=config.seed,
        divergences=divergences,
    )


def posterior_outputs(samples: PosteriorSamples, spec, X) -> np.ndarray:
    """Head outputs for every draw: (S, n, K) with K = probs_batch's width."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    S = samples.n_draws
    k = 2 if spec.head == nnet.HEAD_BINARY else spec.output_dim
    out = np.empty((S, X.shape[0], k))
    for s in range(S):
        out[s] = nnet.probs_batch(spec, samples.draws[s], X)
    return out


def _draw_probs(samples, spec, x, c):
    if spec.head == nnet.HEAD_IDENTITY:
        if c != 0:
            raise ValueError("identity head has a single output, use c = 0")
        col = 0
    else:
        col = nnet._check_class(spec, c)
    return posterior_outputs(samples, spec, x)[:, 0, col]


def ref_epistemic(samples: PosteriorSamples, spec, x, c) -> float:
    """Unbiased posterior variance of the class-c probability at x."""
    if samples.n_draws < 2:
        raise ValueError("need at least 2 draws for a variance")
    return float(np.var(_draw_probs(samples, spec, x, c), ddof=1))


def ref_aleatoric(samples: PosteriorSamples, spec, x, c) -> float:
    """Posterior mean of p(1-p) at x; classifier heads only."""
    if spec.head == nnet.HEAD_IDENTITY:
        raise ValueError("aleatoric reference is defined for classifier heads")
    if samples.n_draws < 1:
        raise ValueError("need at least 1 draw")
    p = _draw_probs(samples, spec, x, c)
    return float(np.mean(p * (1.0 - p)))


def dump_draws(samples: PosteriorSamples, path):
    """Binary dump: ASCII header "HMC1 S D seed\\n", then the draws as
    row-major little-endian float64."""
    S, D = samples.draws.shape
    with open(path, "wb") as fh:
        fh.write(f"HMC1 {S} {D} {samples.seed}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(samples.draws, dtype="<f8").tobytes())


def load_draws(path):
    """Inverse of dump_draws: (draws, seed)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != "HMC1":
            raise ValueError("not an HMC1 draw dump")
        S, D, seed = (int(v) for v in header[1:])
        body = fh.read(S * D * 8)
    if len(body) != S * D * 8:
        raise ValueError("draw dump is truncated")
    return np.frombuffer(body, dtype="<f8").reshape(S, D).copy(), seed


@dataclass
class CalibrationReport:
    """Gaussian-target sanity check used by tests and the CLI."""

    mean_abs_max: float
    cov_abs_max_err: float
    accept_rate: float
    step_size: float
    passed: bool


def gaussian_calibration(dim=2, seed=0, config: HmcConfig = None) -> CalibrationReport:
    """Sample a standard normal and compare empirical moments to the truth.

    Pass bands: |mean| <= 0.05 per coordinate, |cov - I| <= 0.1 entrywise,
    accept rate within 0.1 of the target.
    """
    cfg = config if config is not None else HmcConfig(seed=seed)
    s = hmc_sample(StandardNormalTarget(dim), np.zeros(dim), cfg)
    mean_err = float(np.abs(s.draws.mean(axis=0)).max())
    cov = np.cov(s.draws.T) if dim > 1 else np.atleast_2d(np.var(s.draws, ddof=1))
    cov_err = float(np.abs(cov - np.eye(dim)).max())
    passed = (
        mean_err <= 0.05
        and cov_err <= 0.1
        and abs(s.accept_rate - cfg.target_accept) <= 0.1
    )
    return CalibrationReport(
        mean_abs_max=mean_err,
        cov_abs_max_err=cov_err,
        accept_rate=s.accept_rate,
        step_size=s.adapted_step_size,
        passed=passed,
    )

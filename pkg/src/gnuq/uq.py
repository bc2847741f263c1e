"""Uncertainty estimators.

Epistemic: the squared gradient norm ||g||^2 of the class probability (the
isotropic delta-method variance g' Cov g with Cov = I), or the damped-Fisher
Laplace form g' (F + lam I)^{-1} g. Aleatoric: the Bernoulli variance p(1-p)
at the point estimate, optionally averaged over a Gaussian Laplace posterior.
The sequence variants operate on per-token gradients of next-token
probabilities. Map evaluation walks a grid and stores raw values; min-max
normalization is a separate, explicit step.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import nnet

FISHER_MAX_DIM = 4096

ISOTROPIC = "isotropic"
DAMPED_FISHER = "damped-fisher"

GN = "gn"
LAPLACE = "laplace"
ALEATORIC_POINT = "aleatoric-point"
ESTIMATORS = (GN, LAPLACE, ALEATORIC_POINT)


@dataclass
class CovarianceModel:
    """Parameter covariance: identity (scale-free) or damped empirical Fisher."""

    variant: str
    fisher: np.ndarray = None
    damping: float = None

    def __post_init__(self):
        if self.variant not in (ISOTROPIC, DAMPED_FISHER):
            raise ValueError(f"unknown covariance variant {self.variant!r}")
        if self.variant == ISOTROPIC:
            if self.fisher is not None or self.damping is not None:
                raise ValueError("isotropic covariance carries no matrix")
            return
        F = np.asarray(self.fisher, dtype=np.float64)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ValueError("fisher must be square")
        if not np.allclose(F, F.T, atol=1e-10, rtol=0.0):
            raise ValueError("fisher must be symmetric (atol 1e-10)")
        if self.damping is None or self.damping <= 0:
            raise ValueError("damped-fisher needs damping > 0")
        self.fisher = F

    @classmethod
    def isotropic(cls):
        return cls(ISOTROPIC)

    @classmethod
    def damped_fisher(cls, fisher, damping):
        return cls(DAMPED_FISHER, fisher, float(damping))


@dataclass
class UncertaintyMap:
    """Per-grid-point estimator values. ``grid_ys`` is empty for 1D maps;
    ``values`` is (len(grid_ys) or 1, len(grid_xs)), stored with ascending
    axes (emission handles raster orientation)."""

    grid_xs: np.ndarray
    grid_ys: np.ndarray
    values: np.ndarray
    estimator_name: str
    normalized: bool = False

    def __post_init__(self):
        self.grid_xs = np.asarray(self.grid_xs, dtype=np.float64)
        self.grid_ys = np.asarray(self.grid_ys, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        ny = self.grid_ys.size if self.grid_ys.size else 1
        if self.values.shape != (ny, self.grid_xs.size):
            raise ValueError("values shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("map values must be finite")
        if (self.values < 0).any():
            raise ValueError("map values must be nonnegative")


@dataclass
class SequenceGradients:
    """Per-token probability gradients g_t and probabilities p_t."""

    per_token_grads: np.ndarray  # (T, D)
    per_token_probs: np.ndarray  # (T,)

    def __post_init__(self):
        self.per_token_grads = np.atleast_2d(
            np.asarray(self.per_token_grads, dtype=np.float64)
        )
        self.per_token_probs = np.asarray(
            self.per_token_probs, dtype=np.float64
        ).ravel()
        T = self.per_token_probs.size
        if T < 1 or self.per_token_grads.shape[0] != T:
            raise ValueError("need one gradient per token, T >= 1")
        if ((self.per_token_probs < 0) | (self.per_token_probs > 1)).any():
            raise ValueError("token probabilities must lie in [0, 1]")


def epistemic_gradient_norm(g) -> float:
    """||g||^2, the isotropic delta-method epistemic estimate."""
    g = np.asarray(g, dtype=np.float64).ravel()
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient must be finite")
    return float(g @ g)


def aleatoric_point(p) -> float:
    """Bernoulli variance p(1-p) of the point prediction."""
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return p * (1.0 - p)


def empirical_fisher(spec, params, dataset, label_mode="observed-labels", seed=0):
    """F = (1/n) sum_i grad l_i grad l_i' from per-sample NLL gradients.

    ``observed-labels`` uses the dataset's labels; ``model-sampled`` draws
    labels from the model's own predictive distribution (deterministic in
    ``seed``). Dense, guarded to D <= 4096.
    """
    D = nnet.param_count(spec)
    if D > FISHER_MAX_DIM:
        raise ValueError(f"dense Fisher capped at D <= {FISHER_MAX_DIM}, got {D}")
    X, y = nnet.dataset_arrays(spec, dataset)
    if label_mode == "model-sampled":
        rng = np.random.default_rng(seed)
        P = nnet.probs_batch(spec, params, X)
        if spec.head == nnet.HEAD_IDENTITY:
            y = P[:, 0] + rng.standard_normal(X.shape[0])
        elif spec.head == nnet.HEAD_BINARY:
            y = (rng.random(X.shape[0]) < P[:, 1]).astype(np.float64)
        else:
            u = rng.random(X.shape[0])
            y = (P.cumsum(axis=1) < u[:, None]).sum(axis=1).astype(np.float64)
    elif label_mode != "observed-labels":
        raise ValueError(f"unknown label_mode {label_mode!r}")
    G = nnet.per_sample_nll_grads(spec, params, X, y)
    F = G.T @ G / X.shape[0]
    return 0.5 * (F + F.T)


def _damped(fisher, lam):
    fisher = np.asarray(fisher, dtype=np.float64)
    if lam is None or lam <= 0:
        raise ValueError("damping must be positive")
    return fisher + lam * np.eye(fisher.shape[0])


def laplace_epistemic(g, fisher, lam) -> float:
    """g' (F + lam I)^{-1} g via a Cholesky solve."""
    g = np.asarray(g, dtype=np.float64).ravel()
    cf = cho_factor(_damped(fisher, lam), lower=True)
    val = float(g @ cho_solve(cf, g))
    if not np.isfinite(val):
        raise RuntimeError("laplace solve produced a non-finite value")
    return val


def laplace_quadratic_batch(G, fisher, lam, cf=None):
    """Row-wise g' (F + lam I)^{-1} g for a stack of gradients."""
    if cf is None:
        cf = cho_factor(_damped(fisher, lam), lower=True)
    return np.einsum("nd,dn->n", G, cho_solve(cf, G.T)), cf


def laplace_aleatoric(spec, params, fisher, lam, x, c, n_draws=512, seed=0):
    """Monte Carlo mean of p(1-p) under theta ~ N(theta*, (F+lam I)^{-1})."""
    if n_draws < 1:
        raise ValueError("need n_draws >= 1")
    theta = nnet.check_params(spec, params)
    L = np.linalg.cholesky(_damped(fisher, lam))
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n_draws, theta.size))
    # theta* + L^{-T} z has covariance (L L')^{-1}
    thetas = theta + solve_triangular(L, Z.T, lower=True, trans="T").T
    acc = 0.0
    for th in thetas:
        p = nnet.predict_prob(spec, th, x, c)
        acc += p * (1.0 - p)
    return acc / n_draws


def sequence_epistemic(sg: SequenceGradients) -> float:
    """||mean_t g_t||^2."""
    gbar = sg.per_token_grads.mean(axis=0)
    return float(gbar @ gbar)


def sequence_aleatoric(sg: SequenceGradients) -> float:
    """mean_t p_t (1 - p_t)."""
    p = sg.per_token_probs
    return float(np.mean(p * (1.0 - p)))


def sequence_gradients(spec, params, X, classes) -> SequenceGradients:
    """Convenience builder: per-token grads/probs for token inputs X (T, d)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    classes = np.asarray(classes).ravel()
    grads = [nnet.grad_prob(spec, params, x, int(c)) for x, c in zip(X, classes)]
    probs = [nnet.predict_prob(spec, params, x, int(c)) for x, c in zip(X, classes)]
    return SequenceGradients(np.array(grads), np.array(probs))


def _grid_points(grid):
    """(points, xs, ys) from an axes()-bearing grid or an (xs, ys) pair."""
    if hasattr(grid, "axes"):
        xs, ys = grid.axes()
    else:
        xs, ys = grid
    xs = np.asarray(xs, dtype=np.float64)
    if ys is None or np.size(ys) == 0:
        return xs[:, None], xs, np.empty(0)
    ys = np.asarray(ys, dtype=np.float64)
    XX, YY = np.meshgrid(xs, ys)
    return np.column_stack([XX.ravel(), YY.ravel()]), xs, ys


def uncertainty_map(spec, params, grid, estimator, c=1, cov=None, chunk=2048):
    """Evaluate one estimator at every grid point (raw, unnormalized values).

    ``laplace`` requires a DampedFisher covariance model; ``gn`` and
    ``aleatoric-point`` accept no covariance (or an explicit Isotropic one).
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    if estimator == LAPLACE:
        if cov is None or cov.variant != DAMPED_FISHER:
            raise ValueError("laplace maps need a DampedFisher covariance model")
    elif cov is not None and cov.variant != ISOTROPIC:
        raise ValueError(f"{estimator} maps take an isotropic covariance only")
    if estimator == ALEATORIC_POINT and spec.head == nnet.HEAD_IDENTITY:
        raise ValueError("aleatoric-point is undefined for the identity head")

    pts, xs, ys = _grid_points(grid)
    if pts.shape[1] != spec.input_dim:
        raise ValueError("grid dimensionality does not match spec.input_dim")

    if estimator == GN:
        _, vals = nnet.gradnorm_batch(spec, params, pts, c)
    elif estimator == ALEATORIC_POINT:
        col = nnet._check_class(spec, c)
        p = nnet.probs_batch(spec, params, pts)[:, col]
        vals = p * (1.0 - p)
    else:
        vals = np.empty(pts.shape[0])
        cf = None
        for lo in range(0, pts.shape[0], chunk):
            hi = min(lo + chunk, pts.shape[0])
            _, G = nnet.per_sample_prob_grads(spec, params, pts[lo:hi], c)
            vals[lo:hi], cf = laplace_quadratic_batch(G, cov.fisher, cov.damping, cf)
    ny = ys.size if ys.size else 1
    return UncertaintyMap(xs, ys, vals.reshape(ny, xs.size), estimator, False)


def normalize_map(m: UncertaintyMap) -> UncertaintyMap:
    """Min-max normalize to [0, 1]; constant maps become all-zero."""
    vmin = m.values.min()
    vmax = m.values.max()
    if vmax > vmin:
        vals = (m.values - vmin) / (vmax - vmin)
    else:
        vals = np.zeros_like(m.values)
    return UncertaintyMap(m.grid_xs, m.grid_ys, vals, m.estimator_name, True)

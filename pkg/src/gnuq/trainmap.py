"""MAP estimation: full-batch Adam on the regularized mean NLL.

Produces theta*, the expansion point for every estimator downstream. Training
is deterministic given the seed (full-batch gradients, fixed init), tracks the
best iterate seen, and aborts on divergence while keeping the last finite
iterate available on the raised error.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import nnet

log = logging.getLogger("gnuq.trainmap")

_DIVERGE_LOSS = 1e6


@dataclass
class TrainConfig:
    prior_precision: float = 1e-2
    max_iters: int = 5000
    grad_tol: float = 1e-5
    step_size: float = 1e-2
    optimizer: str = "full-batch-adam"
    seed: int = 0

    def __post_init__(self):
        if self.prior_precision < 0:
            raise ValueError("prior_precision must be nonnegative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.grad_tol <= 0 or self.step_size <= 0:
            raise ValueError("grad_tol and step_size must be positive")
        if self.optimizer != "full-batch-adam":
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    final_loss: float
    final_grad_norm: float
    iters_used: int
    train_accuracy: float = None
    train_rmse: float = None


class TrainDiverged(RuntimeError):
    """Loss became non-finite or blew up; carries the last finite iterate."""

    def __init__(self, msg, last_params, last_loss):
        super().__init__(msg)
        self.last_params = last_params
        self.last_loss = last_loss


def _fit_metrics(spec, theta, X, y):
    P = nnet.probs_batch(spec, theta, X)
    if spec.head == nnet.HEAD_IDENTITY:
        return None, float(np.sqrt(np.mean((P[:, 0] - y) ** 2)))
    pred = P.argmax(axis=1)
    return float(np.mean(pred == y.astype(np.int64))), None


def train_map(spec, dataset, config: TrainConfig):
    """Returns (theta*, TrainReport): the iterate with grad norm <= grad_tol,
    or the best-loss iterate after max_iters."""
    X, y = nnet.dataset_arrays(spec, dataset)
    lam = config.prior_precision
    theta = nnet.init_params(spec, config.seed)

    b1, b2, eps = 0.9, 0.999, 1e-8
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best_theta, best_loss, best_gn = theta.copy(), np.inf, np.inf
    converged = False
    updates = 0

    loss, grad = nnet.loss_and_grad(spec, theta, X, y, lam)
    for t in range(1, config.max_iters + 1):
        if not np.isfinite(loss) or loss > _DIVERGE_LOSS:
            raise TrainDiverged(
                f"training diverged at iter {t - 1} (loss={loss!r})",
                best_theta, best_loss,
            )
        gn = float(np.linalg.norm(grad))
        if loss < best_loss:
            best_theta, best_loss, best_gn = theta.copy(), loss, gn
        if gn <= config.grad_tol:
            converged = True
            best_theta, best_loss, best_gn = theta, loss, gn
            break
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - config.step_size * mhat / (np.sqrt(vhat) + eps)
        updates += 1
        loss, grad = nnet.loss_and_grad(spec, theta, X, y, lam)

    if config.max_iters == 0:
        best_theta, best_loss = theta, loss
        best_gn = float(np.linalg.norm(grad))
    elif not converged:
        # final evaluation point may beat the stored best
        gn = float(np.linalg.norm(grad))
        if np.isfinite(loss) and loss < best_loss:
            best_theta, best_loss, best_gn = theta, loss, gn

    acc, rmse = _fit_metrics(spec, best_theta, X, y)
    report = TrainReport(
        final_loss=float(best_loss),
        final_grad_norm=float(best_gn),
        iters_used=updates,
        train_accuracy=acc,
        train_rmse=rmse,
    )
    log.debug(
        "train_map: %s loss=%.6g |g|=%.3g iters=%d acc=%s rmse=%s",
        spec, report.final_loss, report.final_grad_norm, updates, acc, rmse,
    )
    return best_theta, report

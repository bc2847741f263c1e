"""Fixed-family feedforward models with exact reverse-mode gradients.

The family: logistic/softmax regression and small tanh MLPs, described by
:class:`MlpSpec`. Parameters live in a single flat float64 vector
("ParamVector"); gradients come back the same way ("GradientVector"). The
flat layout is, layer by layer, the (fan_in, fan_out) weight matrix in
row-major order followed by the fan_out bias entries; biases are separate
rows, not folded into the weights.

Heads:

* ``binary-sigmoid``  — single logit, p(y=1|x) = sigmoid(z)
* ``multiclass-softmax`` — K >= 2 logits, softmax with max subtraction
* ``regression-identity`` — single raw output, Gaussian NLL (unit variance)

The batch entry points (``probs_batch``, ``gradnorm_batch``, ``loss_and_grad``)
dispatch to the selected kernel backend; per-sample dense gradients
(``per_sample_prob_grads``, ``per_sample_nll_grads``) are numpy-only since
they are bounded by the dense-Fisher use cases.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import _pyref as _ref

HEAD_BINARY = "binary-sigmoid"
HEAD_SOFTMAX = "multiclass-softmax"
HEAD_IDENTITY = "regression-identity"
HEADS = (HEAD_BINARY, HEAD_SOFTMAX, HEAD_IDENTITY)

_HEAD_CODE = {
    HEAD_BINARY: _kernels.HEAD_BINARY,
    HEAD_SOFTMAX: _kernels.HEAD_SOFTMAX,
    HEAD_IDENTITY: _kernels.HEAD_IDENTITY,
}

# ParamVector / GradientVector are plain 1-D float64 arrays.
ParamVector = np.ndarray
GradientVector = np.ndarray


@dataclass(frozen=True)
class MlpSpec:
    """Architecture descriptor; immutable and hashable."""

    input_dim: int
    hidden_widths: tuple = ()
    output_dim: int = 1
    activation: str = "tanh"
    head: str = HEAD_BINARY

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == HEAD_BINARY and self.output_dim != 1:
            raise ValueError("binary-sigmoid head requires output_dim = 1")
        if self.head == HEAD_SOFTMAX and self.output_dim < 2:
            raise ValueError("multiclass-softmax head requires output_dim >= 2")
        if self.head == HEAD_IDENTITY and self.output_dim != 1:
            raise ValueError("regression-identity head requires output_dim = 1")

    @property
    def dims(self):
        return (self.input_dim, *self.hidden_widths, self.output_dim)


def param_count(spec: MlpSpec) -> int:
    """Total parameter count: sum of (fan_in+1)*fan_out over layer pairs."""
    dims = spec.dims
    return sum((dims[i] + 1) * dims[i + 1] for i in range(len(dims) - 1))


def init_params(spec: MlpSpec, seed: int) -> ParamVector:
    """Weights ~ N(0, 1/fan_in), biases zero; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    dims = spec.dims
    parts = []
    for din, dout in zip(dims[:-1], dims[1:]):
        parts.append(rng.standard_normal((din, dout)).ravel() / np.sqrt(din))
        parts.append(np.zeros(dout))
    return np.concatenate(parts)


def check_params(spec: MlpSpec, theta) -> ParamVector:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] != param_count(spec):
        raise ValueError(
            f"parameter vector has length {theta.size}, spec needs {param_count(spec)}"
        )
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter vector contains non-finite entries")
    return theta


def split_params(spec: MlpSpec, theta):
    """Zero-copy (Ws, bs) views into the flat vector."""
    dims = spec.dims
    Ws, bs = [], []
    off = 0
    for din, dout in zip(dims[:-1], dims[1:]):
        Ws.append(theta[off:off + din * dout].reshape(din, dout))
        off += din * dout
        bs.append(theta[off:off + dout])
        off += dout
    return Ws, bs


def _as_matrix(spec: MlpSpec, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"inputs must be (n, {spec.input_dim}), got {X.shape}")
    return X


def _check_class(spec: MlpSpec, c):
    if spec.head == HEAD_IDENTITY:
        raise ValueError("regression-identity head has no class probabilities")
    k = 2 if spec.head == HEAD_BINARY else spec.output_dim
    c = int(c)
    if not 0 <= c < k:
        raise ValueError(f"class index {c} invalid for head {spec.head}")
    return c


def dataset_arrays(spec: MlpSpec, dataset):
    """Accepts a LabeledDataset-shaped object or an (X, y) pair."""
    if hasattr(dataset, "inputs"):
        X, y = dataset.inputs, dataset.labels
    else:
        X, y = dataset
    X = _as_matrix(spec, X)
    y = np.ascontiguousarray(y, dtype=np.float64).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError("inputs and labels disagree on n")
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    if spec.head == HEAD_BINARY and not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("binary labels must be 0/1")
    if spec.head == HEAD_SOFTMAX:
        if ((y < 0) | (y >= spec.output_dim) | (y != np.floor(y))).any():
            raise ValueError("softmax labels must be integers in [0, output_dim)")
    return X, y


def forward(spec: MlpSpec, params, x):
    """Head input: the logit(s) for classifiers, the raw output for regression.

    Returns a scalar when output_dim is 1, else the logit vector.
    """
    theta = check_params(spec, params)
    Ws, bs = split_params(spec, theta)
    _, Z = _ref._forward(Ws, bs, _as_matrix(spec, x))
    return float(Z[0, 0]) if spec.output_dim == 1 else Z[0].copy()


def probs_batch(spec: MlpSpec, params, X) -> np.ndarray:
    """Row-wise head outputs: (n,2) [p0,p1] binary, (n,K) softmax,
    (n,1) raw outputs for the identity head."""
    theta = check_params(spec, params)
    X = _as_matrix(spec, X)
    k = 2 if spec.head == HEAD_BINARY else spec.output_dim
    out = np.empty((X.shape[0], k))
    Ws, bs = split_params(spec, theta)
    _kernels.probs(Ws, bs, _HEAD_CODE[spec.head], X, out)
    return out


def predict_prob(spec: MlpSpec, params, x, c) -> float:
    """p(y=c | x, theta) for classifier heads."""
    c = _check_class(spec, c)
    return float(probs_batch(spec, params, x)[0, c])


def gradnorm_batch(spec: MlpSpec, params, X, c=1):
    """(values, squared gradient norms) per row, for the class-c probability
    (classifiers) or the raw output (identity head); never materializes the
    per-sample gradient matrix."""
    theta = check_params(spec, params)
    X = _as_matrix(spec, X)
    if spec.head != HEAD_IDENTITY:
        c = _check_class(spec, c)
    vals = np.empty(X.shape[0])
    sq = np.empty(X.shape[0])
    Ws, bs = split_params(spec, theta)
    _kernels.gradnorm(Ws, bs, _HEAD_CODE[spec.head], X, int(c), vals, sq)
    return vals, sq


def loss_and_grad(spec: MlpSpec, theta, X, y, prior_precision=0.0):
    """Regularized mean NLL and its exact gradient, on raw arrays.

    loss = mean_i nll_i + (prior_precision/2) * ||theta||^2.
    """
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    grad = np.zeros(theta.shape[0])
    Ws, bs = split_params(spec, theta)
    gWs, gbs = split_params(spec, grad)
    nll = _kernels.loss_grad(Ws, bs, _HEAD_CODE[spec.head], X, y, gWs, gbs)
    lam = float(prior_precision)
    if lam != 0.0:
        nll += 0.5 * lam * float(theta @ theta)
        grad += lam * theta
    return nll, grad


def grad_loss(spec: MlpSpec, params, dataset, prior_precision=0.0):
    """(loss, gradient) of the regularized mean NLL over a dataset."""
    theta = check_params(spec, params)
    X, y = dataset_arrays(spec, dataset)
    return loss_and_grad(spec, theta, X, y, prior_precision)


def _prob_seed(spec: MlpSpec, Z, c):
    """Per-sample (values, d value / d logits) for the class-c probability
    or the identity output."""
    if spec.head == HEAD_BINARY:
        p1 = _ref._sigmoid(Z[:, 0])
        s = p1 * (1.0 - p1)
        if c == 1:
            return p1, s[:, None].copy()
        return 1.0 - p1, -s[:, None]
    if spec.head == HEAD_SOFTMAX:
        P = _ref._softmax(Z)
        pc = P[:, c].copy()
        dZ = -P * pc[:, None]
        dZ[:, c] += pc
        return pc, dZ
    return Z[:, 0].copy(), np.ones_like(Z)


def _per_sample_from_seed(Ws, acts, dZ):
    """Assemble the (n, D) per-sample gradient matrix from a logit seed."""
    n = dZ.shape[0]
    D = sum((W.shape[0] + 1) * W.shape[1] for W in Ws)
    G = np.empty((n, D))
    off = D
    delta = dZ
    for l in range(len(Ws) - 1, -1, -1):
        W, A = Ws[l], acts[l]
        din, dout = W.shape
        G[:, off - dout:off] = delta
        off -= dout + din * dout
        G[:, off:off + din * dout] = np.einsum("ni,nj->nij", A, delta).reshape(n, -1)
        if l > 0:
            delta = (delta @ W.T) * (1.0 - A * A)
    return G


def per_sample_prob_grads(spec: MlpSpec, params, X, c=1):
    """(values, (n, D) gradients) of the class-c probability (or identity
    output) per row. Dense in D; chunk the rows for large grids."""
    theta = check_params(spec, params)
    X = _as_matrix(spec, X)
    if spec.head != HEAD_IDENTITY:
        c = _check_class(spec, c)
    Ws, bs = split_params(spec, theta)
    acts, Z = _ref._forward(Ws, bs, X)
    vals, dZ = _prob_seed(spec, Z, int(c))
    return vals, _per_sample_from_seed(Ws, acts, dZ)


def per_sample_nll_grads(spec: MlpSpec, params, X, y):
    """(n, D) per-sample gradients of the unregularized NLL terms."""
    theta = check_params(spec, params)
    X, y = dataset_arrays(spec, (X, y))
    Ws, bs = split_params(spec, theta)
    acts, Z = _ref._forward(Ws, bs, X)
    if spec.head == HEAD_BINARY:
        dZ = (_ref._sigmoid(Z[:, 0]) - y)[:, None]
    elif spec.head == HEAD_SOFTMAX:
        dZ = _ref._softmax(Z)
        dZ[np.arange(len(y)), y.astype(np.int64)] -= 1.0
    else:
        dZ = Z - y[:, None]
    return _per_sample_from_seed(Ws, acts, dZ)


def grad_prob(spec: MlpSpec, params, x, c) -> GradientVector:
    """Exact gradient of predict_prob(spec, params, x, c) w.r.t. theta."""
    c = _check_class(spec, c)
    _, G = per_sample_prob_grads(spec, params, x, c)
    return G[0]


def grad_output(spec: MlpSpec, params, x) -> GradientVector:
    """Gradient of the raw model output (identity head only)."""
    if spec.head != HEAD_IDENTITY:
        raise ValueError("grad_output is for the regression-identity head")
    _, G = per_sample_prob_grads(spec, params, x)
    return G[0]

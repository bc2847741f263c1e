"""Pure-numpy kernel backend.

Reference implementation of the three hot kernels (fused loss+gradient,
batched head probabilities, batched per-sample gradient norms) for the fixed
tanh-MLP family. The compiled backend in ``_fast.pyx`` mirrors these
semantics exactly; both operate on pre-split parameter views so no flat-vector
bookkeeping happens here.

Conventions shared by both backends:

* ``Ws``/``bs`` are lists of C-contiguous float64 arrays, ``Ws[l]`` shaped
  ``(fan_in, fan_out)``.
* ``head`` is one of the integer codes below.
* labels ``y`` are float64 even for classification (class indices are exact
  small integers).
* ``loss_grad`` returns the *mean* NLL and writes the mean-NLL gradient into
  ``gWs``/``gbs``; the regularizer is the caller's business.
"""

import numpy as np

HEAD_BINARY = 0
HEAD_SOFTMAX = 1
HEAD_IDENTITY = 2


def _sigmoid(z):
    # stable in both tails
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(Z):
    ez = np.exp(Z - Z.max(axis=1, keepdims=True))
    return ez / ez.sum(axis=1, keepdims=True)


def _forward(Ws, bs, X):
    """Forward pass; returns (activations per layer input, final logits)."""
    acts = [X]
    A = X
    for l in range(len(Ws) - 1):
        A = np.tanh(A @ Ws[l] + bs[l])
        acts.append(A)
    Z = A @ Ws[-1] + bs[-1]
    return acts, Z


def _backward(Ws, acts, delta, gWs, gbs):
    # delta: (n, fan_out) seed for the last layer, consumed in place
    for l in range(len(Ws) - 1, -1, -1):
        A = acts[l]
        np.matmul(A.T, delta, out=gWs[l])
        np.sum(delta, axis=0, out=gbs[l])
        if l > 0:
            delta = (delta @ Ws[l].T) * (1.0 - A * A)


def loss_grad(Ws, bs, head, X, y, gWs, gbs):
    """Mean NLL and its gradient (written into gWs/gbs). Returns the loss."""
    n = X.shape[0]
    acts, Z = _forward(Ws, bs, X)
    if head == HEAD_BINARY:
        z = Z[:, 0]
        # softplus(z) - y*z, stable: max(z,0) + log1p(exp(-|z|)) - y*z
        nll = np.mean(np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - y * z)
        dZ = ((_sigmoid(z) - y) / n)[:, None]
    elif head == HEAD_SOFTMAX:
        zmax = Z.max(axis=1)
        ez = np.exp(Z - zmax[:, None])
        sez = ez.sum(axis=1)
        idx = y.astype(np.int64)
        rows = np.arange(n)
        nll = np.mean(np.log(sez) + zmax - Z[rows, idx])
        dZ = ez / sez[:, None]
        dZ[rows, idx] -= 1.0
        dZ /= n
    elif head == HEAD_IDENTITY:
        r = Z[:, 0] - y
        nll = 0.5 * np.mean(r * r)
        dZ = (r / n)[:, None]
    else:
        raise ValueError(f"unknown head code {head}")
    _backward(Ws, acts, dZ, gWs, gbs)
    return float(nll)


def probs(Ws, bs, head, X, out):
    """Head outputs per row: [p0,p1] (binary), class probabilities (softmax),
    or the raw output (identity)."""
    _, Z = _forward(Ws, bs, X)
    if head == HEAD_BINARY:
        p1 = _sigmoid(Z[:, 0])
        out[:, 0] = 1.0 - p1
        out[:, 1] = p1
    elif head == HEAD_SOFTMAX:
        out[:] = _softmax(Z)
    elif head == HEAD_IDENTITY:
        out[:] = Z
    else:
        raise ValueError(f"unknown head code {head}")


def gradnorm(Ws, bs, head, X, c, out_val, out_sq):
    """Per-row head value for class ``c`` and squared parameter-gradient norm.

    Uses the factorization ||dW_l||^2 + ||db_l||^2 = (1+||a||^2)*||delta||^2
    per sample, so no per-sample gradient matrix is materialized.
    """
    acts, Z = _forward(Ws, bs, X)
    if head == HEAD_BINARY:
        p1 = _sigmoid(Z[:, 0])
        s = p1 * (1.0 - p1)
        if c == 1:
            out_val[:] = p1
            delta = s[:, None].copy()
        else:
            out_val[:] = 1.0 - p1
            delta = (-s)[:, None]
    elif head == HEAD_SOFTMAX:
        P = _softmax(Z)
        pc = P[:, c]
        out_val[:] = pc
        delta = -P * pc[:, None]
        delta[:, c] += pc
    elif head == HEAD_IDENTITY:
        out_val[:] = Z[:, 0]
        delta = np.ones_like(Z)
    else:
        raise ValueError(f"unknown head code {head}")
    sq = np.zeros(X.shape[0])
    for l in range(len(Ws) - 1, -1, -1):
        A = acts[l]
        a2 = np.einsum("ij,ij->i", A, A)
        d2 = np.einsum("ij,ij->i", delta, delta)
        sq += (1.0 + a2) * d2
        if l > 0:
            delta = (delta @ Ws[l].T) * (1.0 - A * A)
    out_sq[:] = sq

# cython: boundscheck=False, wraparound=False, cdivision=True
"""BLAS-backed compiled kernels.

Same contracts as ``_pyref`` (see its docstring for conventions); matrix
products go through dgemm, everything else is plain C loops. Row-major
products are expressed through the usual transpose trick on the column-major
BLAS interface.
"""

import numpy as np

from libc.math cimport exp, log, log1p
from scipy.linalg.cython_blas cimport dgemm

HEAD_BINARY = 0
HEAD_SOFTMAX = 1
HEAD_IDENTITY = 2


cdef inline double _sig(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef void _mm_nn(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C) noexcept:
    # row-major C = A @ B
    cdef int m = <int> A.shape[0]
    cdef int k = <int> A.shape[1]
    cdef int n = <int> B.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char nt = b'N'
    dgemm(&nt, &nt, &n, &m, &k, &one, &B[0, 0], &n, &A[0, 0], &k, &zero, &C[0, 0], &n)


cdef void _mm_tn(double[:, ::1] A, double[:, ::1] D, double[:, ::1] C) noexcept:
    # row-major C = A.T @ D with A (n, din), D (n, dout)
    cdef int n = <int> A.shape[0]
    cdef int din = <int> A.shape[1]
    cdef int dout = <int> D.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char nt = b'N', tt = b'T'
    dgemm(&nt, &tt, &dout, &din, &n, &one, &D[0, 0], &dout, &A[0, 0], &din,
          &zero, &C[0, 0], &dout)


cdef void _mm_nt(double[:, ::1] D, double[:, ::1] W, double[:, ::1] C) noexcept:
    # row-major C = D @ W.T with D (n, dout), W (din, dout)
    cdef int n = <int> D.shape[0]
    cdef int din = <int> W.shape[0]
    cdef int dout = <int> W.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char nt = b'N', tt = b'T'
    dgemm(&tt, &nt, &din, &n, &dout, &one, &W[0, 0], &dout, &D[0, 0], &dout,
          &zero, &C[0, 0], &din)


cdef list _forward(list Ws, list bs, object X):
    """Returns [a_0=X, a_1, ..., a_{L-1}, Z]: layer inputs plus final logits."""
    cdef Py_ssize_t L = len(Ws)
    cdef Py_ssize_t l
    cdef int i, j, n, dout
    cdef double[:, ::1] A, W, Z
    cdef double[::1] b
    cdef list out = [X]
    A = X
    n = <int> A.shape[0]
    for l in range(L):
        W = Ws[l]
        b = bs[l]
        dout = <int> W.shape[1]
        Zo = np.empty((n, dout))
        Z = Zo
        _mm_nn(A, W, Z)
        if l < L - 1:
            # ufuncs beat a scalar libm loop on whole hidden layers
            np.add(Zo, bs[l], out=Zo)
            np.tanh(Zo, out=Zo)
        else:
            for i in range(n):
                for j in range(dout):
                    Z[i, j] = Z[i, j] + b[j]
        out.append(Zo)
        A = Z
    return out


cdef void _backward(list Ws, list acts, object delta0, list gWs, list gbs):
    # delta0: (n, fan_out) seed for the last layer; buffers are consumed
    cdef Py_ssize_t L = len(Ws)
    cdef Py_ssize_t l
    cdef int i, j, n, din, dout
    cdef double[:, ::1] A, W, D, P, gW
    cdef double[::1] gb
    cdef object dobj = delta0
    D = dobj
    n = <int> D.shape[0]
    for l in range(L - 1, -1, -1):
        A = acts[l]
        W = Ws[l]
        gW = gWs[l]
        gb = gbs[l]
        din = <int> W.shape[0]
        dout = <int> W.shape[1]
        _mm_tn(A, D, gW)
        for j in range(dout):
            gb[j] = 0.0
        for i in range(n):
            for j in range(dout):
                gb[j] += D[i, j]
        if l > 0:
            pobj = np.empty((n, din))
            P = pobj
            _mm_nt(D, W, P)
            for i in range(n):
                for j in range(din):
                    P[i, j] *= 1.0 - A[i, j] * A[i, j]
            dobj = pobj
            D = P


def loss_grad(list Ws, list bs, int head, X, double[::1] y, list gWs, list gbs):
    """Mean NLL and its gradient (written into gWs/gbs). Returns the loss."""
    cdef Py_ssize_t L = len(Ws)
    cdef list acts = _forward(Ws, bs, X)
    cdef object Zo = acts[L]
    cdef double[:, ::1] Z = Zo
    cdef int n = <int> Z.shape[0]
    cdef int K = <int> Z.shape[1]
    cdef int i, j, yi
    cdef double nll = 0.0, z, zmax, se, zy, r
    cdef double invn = 1.0 / n
    if head == HEAD_BINARY:
        for i in range(n):
            z = Z[i, 0]
            if z > 0.0:
                nll += z + log1p(exp(-z)) - y[i] * z
            else:
                nll += log1p(exp(z)) - y[i] * z
            Z[i, 0] = (_sig(z) - y[i]) * invn
    elif head == HEAD_SOFTMAX:
        for i in range(n):
            yi = <int> y[i]
            zmax = Z[i, 0]
            for j in range(1, K):
                if Z[i, j] > zmax:
                    zmax = Z[i, j]
            zy = Z[i, yi]
            se = 0.0
            for j in range(K):
                Z[i, j] = exp(Z[i, j] - zmax)
                se += Z[i, j]
            nll += log(se) + zmax - zy
            for j in range(K):
                Z[i, j] = Z[i, j] / se * invn
            Z[i, yi] -= invn
    elif head == HEAD_IDENTITY:
        for i in range(n):
            r = Z[i, 0] - y[i]
            nll += 0.5 * r * r
            Z[i, 0] = r * invn
    else:
        raise ValueError(f"unknown head code {head}")
    _backward(Ws, acts[:L], Zo, gWs, gbs)
    return nll * invn


def probs(list Ws, list bs, int head, X, double[:, ::1] out):
    """Head outputs per row: [p0,p1] (binary), class probabilities (softmax),
    or the raw output (identity)."""
    cdef Py_ssize_t L = len(Ws)
    cdef list acts = _forward(Ws, bs, X)
    cdef double[:, ::1] Z = acts[L]
    cdef int n = <int> Z.shape[0]
    cdef int K = <int> Z.shape[1]
    cdef int i, j
    cdef double p, zmax, se
    if head == HEAD_BINARY:
        for i in range(n):
            p = _sig(Z[i, 0])
            out[i, 0] = 1.0 - p
            out[i, 1] = p
    elif head == HEAD_SOFTMAX:
        for i in range(n):
            zmax = Z[i, 0]
            for j in range(1, K):
                if Z[i, j] > zmax:
                    zmax = Z[i, j]
            se = 0.0
            for j in range(K):
                out[i, j] = exp(Z[i, j] - zmax)
                se += out[i, j]
            for j in range(K):
                out[i, j] /= se
    elif head == HEAD_IDENTITY:
        for i in range(n):
            out[i, 0] = Z[i, 0]
    else:
        raise ValueError(f"unknown head code {head}")


def gradnorm(list Ws, list bs, int head, X, int c,
             double[::1] out_val, double[::1] out_sq):
    """Per-row head value for class ``c`` and squared parameter-gradient norm,
    via the per-sample factorization (1+||a||^2)*||delta||^2 per layer."""
    cdef Py_ssize_t L = len(Ws)
    cdef list acts = _forward(Ws, bs, X)
    cdef object Zo = acts[L]
    cdef double[:, ::1] Z = Zo
    cdef int n = <int> Z.shape[0]
    cdef int K = <int> Z.shape[1]
    cdef int i, j, din, dout
    cdef Py_ssize_t l
    cdef double p, s, zmax, se, pc, a2, d2
    cdef double[:, ::1] A, W, D, P
    if head == HEAD_BINARY:
        for i in range(n):
            p = _sig(Z[i, 0])
            s = p * (1.0 - p)
            if c == 1:
                out_val[i] = p
                Z[i, 0] = s
            else:
                out_val[i] = 1.0 - p
                Z[i, 0] = -s
    elif head == HEAD_SOFTMAX:
        for i in range(n):
            zmax = Z[i, 0]
            for j in range(1, K):
                if Z[i, j] > zmax:
                    zmax = Z[i, j]
            se = 0.0
            for j in range(K):
                Z[i, j] = exp(Z[i, j] - zmax)
                se += Z[i, j]
            for j in range(K):
                Z[i, j] /= se
            pc = Z[i, c]
            out_val[i] = pc
            for j in range(K):
                Z[i, j] = -Z[i, j] * pc
            Z[i, c] += pc
    elif head == HEAD_IDENTITY:
        for i in range(n):
            out_val[i] = Z[i, 0]
            Z[i, 0] = 1.0
    else:
        raise ValueError(f"unknown head code {head}")
    cdef object dobj = Zo
    D = dobj
    for i in range(n):
        out_sq[i] = 0.0
    for l in range(L - 1, -1, -1):
        A = acts[l]
        W = Ws[l]
        din = <int> W.shape[0]
        dout = <int> W.shape[1]
        for i in range(n):
            a2 = 0.0
            for j in range(din):
                a2 += A[i, j] * A[i, j]
            d2 = 0.0
            for j in range(dout):
                d2 += D[i, j] * D[i, j]
            out_sq[i] += (1.0 + a2) * d2
        if l > 0:
            pobj = np.empty((n, din))
            P = pobj
            _mm_nt(D, W, P)
            for i in range(n):
                for j in range(din):
                    P[i, j] *= 1.0 - A[i, j] * A[i, j]
            dobj = pobj
            D = P

"""Correlation and hypothesis-test statistics for the result tables.

Self-contained: the Student-t tail probability goes through a
continued-fraction regularized incomplete beta (accurate to ~1e-10 for
dof >= 1) rather than pulling in a special-function library.
"""

from math import exp, lgamma, log, log1p

import numpy as np


def _series(a, name, min_n):
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size < min_n:
        raise ValueError(f"{name} needs at least {min_n} values, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def _pair(xs, ys):
    xs = _series(xs, "xs", 3)
    ys = _series(ys, "ys", 3)
    if xs.size != ys.size:
        raise ValueError("paired series must have equal length")
    return xs, ys


def pearson(xs, ys) -> float:
    """Sample Pearson correlation; raises on zero variance."""
    xs, ys = _pair(xs, ys)
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    den = np.sqrt((dx @ dx) * (dy @ dy))
    if den == 0.0:
        raise ValueError("pearson undefined for zero-variance series")
    return float(np.clip((dx @ dy) / den, -1.0, 1.0))


def average_ranks(a) -> np.ndarray:
    """1-based ranks, ties sharing the mean rank of their run."""
    a = np.asarray(a, dtype=np.float64).ravel()
    order = np.argsort(a, kind="stable")
    s = a[order]
    ranks = np.empty(a.size)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and s[j + 1] == s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Pearson correlation of average-ranked series."""
    xs, ys = _pair(xs, ys)
    return pearson(average_ranks(xs), average_ranks(ys))


def _betacf(a, b, x):
    # Lentz continued fraction for the incomplete beta
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-14:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc(a, b, x) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("betainc needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log1p(-x)
    bt = exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t, dof) -> float:
    """P(|T| >= |t|) for Student-t with ``dof`` degrees of freedom."""
    if dof <= 0:
        raise ValueError("dof must be positive")
    return betainc(0.5 * dof, 0.5, dof / (dof + t * t))


def welch_t(a, b):
    """Welch's t statistic, two-sided p, and Welch-Satterthwaite dof."""
    a = _series(a, "a", 2)
    b = _series(b, "b", 2)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 or vb == 0.0:
        raise ValueError("welch_t undefined for zero-variance series")
    sa, sb = va / a.size, vb / b.size
    t = (a.mean() - b.mean()) / np.sqrt(sa + sb)
    dof = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    return float(t), student_t_two_sided_p(float(t), float(dof)), float(dof)


def cohens_d(a, b) -> float:
    """(mean a - mean b) / pooled sd, pooled with n-1 weights."""
    a = _series(a, "a", 2)
    b = _series(b, "b", 2)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    pooled = ((a.size - 1) * va + (b.size - 1) * vb) / (a.size + b.size - 2)
    if pooled == 0.0:
        raise ValueError("cohens_d undefined for zero pooled variance")
    return float((a.mean() - b.mean()) / np.sqrt(pooled))


def bootstrap_ci(values, statistic, n_resamples=2000, level=0.95, seed=0):
    """Percentile bootstrap interval for a named statistic.

    ``mean`` works on a 1-D sample; ``ratio-of-means`` on (n, 2) pairs and
    bootstraps mean(col 0)/mean(col 1) over resampled rows.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0,1)")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty sample")
    rng = np.random.default_rng(seed)
    n = values.shape[0]
    idx = rng.integers(0, n, size=(n_resamples, n))
    if statistic == "mean":
        if values.ndim != 1:
            raise ValueError("mean statistic needs a 1-D sample")
        stats = values[idx].mean(axis=1)
    elif statistic == "ratio-of-means":
        if values.ndim != 2 or values.shape[1] != 2:
            raise ValueError("ratio-of-means needs (n, 2) pairs")
        res = values[idx]
        stats = res[:, :, 0].mean(axis=1) / res[:, :, 1].mean(axis=1)
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    lo, hi = np.quantile(stats, [0.5 * (1 - level), 1 - 0.5 * (1 - level)])
    return float(lo), float(hi)

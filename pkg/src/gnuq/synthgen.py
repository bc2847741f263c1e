"""Deterministic synthetic-problem generators.

Every generator returns a :class:`LabeledDataset` and is bit-reproducible
given its arguments: one ``numpy`` Generator seeded from ``seed`` drives all
draws in a fixed order. Data lives roughly in [-3,3]^2 (2D problems) or
[-3,3] (1D regression). Datasets export to CSV via :func:`to_csv` with the
column layout documented there.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class LabeledDataset:
    inputs: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 for classification, float64 for regression
    problem_name: str
    seed: int
    class_count: int  # 0 for regression

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def _balanced_labels(n, k):
    """Class ids, counts differing by at most 1, low classes get the extras."""
    reps = np.arange(n) % k
    return np.sort(reps).astype(np.int64)


def _finish(name, X, labels, seed, k, rng):
    order = rng.permutation(len(labels))
    return LabeledDataset(
        inputs=np.ascontiguousarray(X[order], dtype=np.float64),
        labels=np.ascontiguousarray(labels[order]),
        problem_name=name,
        seed=int(seed),
        class_count=k,
    )


def make_linear2d(n, margin=0.3, seed=0) -> LabeledDataset:
    """Two classes split by a line through the origin (normal at 35 deg),
    each point at least ``margin`` from the boundary."""
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    ang = np.deg2rad(35.0)
    u = np.array([np.cos(ang), np.sin(ang)])  # boundary normal
    v = np.array([-u[1], u[0]])
    labels = _balanced_labels(n, 2)
    side = 2.0 * labels - 1.0  # label 1 on the positive side
    dist = side * (margin + np.abs(rng.normal(0.0, 1.0, n)))
    tang = rng.normal(0.0, 1.5, n)
    X = dist[:, None] * u + tang[:, None] * v
    return _finish("linear", X, labels, seed, 2, rng)


def make_xor2d(n, noise=0.5, seed=0) -> LabeledDataset:
    """Four Gaussian clusters at (+-1.5, +-1.5); label = quadrant parity,
    with (+,+) -> 0."""
    if n < 4:
        raise ValueError("need n >= 4")
    rng = np.random.default_rng(seed)
    quad = _balanced_labels(n, 4)
    sx = np.where(quad % 2 == 0, 1.0, -1.0)
    sy = np.where(quad // 2 == 0, 1.0, -1.0)
    centers = 1.5 * np.column_stack([sx, sy])
    X = centers + rng.normal(0.0, noise, (n, 2))
    labels = ((sx < 0) ^ (sy < 0)).astype(np.int64)
    return _finish("xor", X, labels, seed, 2, rng)


def make_rings2d(n, k, noise=0.15, seed=0) -> LabeledDataset:
    """k concentric rings; class = radius band, band centers 2.4*(i+1)/k."""
    if k < 2:
        raise ValueError("need k >= 2")
    if n < 2 * k:
        raise ValueError("need n >= 2k")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, k)
    radius = 2.4 * (labels + 1) / k + rng.normal(0.0, noise, n)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    X = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    return _finish("rings", X, labels, seed, k, rng)


def make_clusters2d(n, k, spread=0.15, seed=0) -> LabeledDataset:
    """k well-separated Gaussian blobs, centers on a circle of radius 2.2."""
    if k < 2:
        raise ValueError("need k >= 2")
    if n < k:
        raise ValueError("need n >= k")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, k)
    ang = 2.0 * np.pi * labels / k + np.pi / 4.0
    centers = 2.2 * np.column_stack([np.cos(ang), np.sin(ang)])
    X = centers + rng.normal(0.0, spread, (n, 2))
    return _finish("clusters", X, labels, seed, k, rng)


def make_spirals2d(n, k, noise=0.3, seed=0) -> LabeledDataset:
    """k interleaved Archimedean arms offset by 2pi/k; label = arm."""
    if k < 2:
        raise ValueError("need k >= 2")
    if n < k:
        raise ValueError("need n >= k")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, k)
    t_max = 1.5 * np.pi
    t = rng.uniform(0.0, t_max, n)
    r = 0.4 + 2.2 * t / t_max
    ang = t + 2.0 * np.pi * labels / k
    X = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    X += rng.normal(0.0, noise, (n, 2))
    return _finish("spirals", X, labels, seed, k, rng)


def spiral_point(j, k, t):
    """Noise-free point of arm j at parameter t (for symmetry checks)."""
    t_max = 1.5 * np.pi
    r = 0.4 + 2.2 * t / t_max
    ang = t + 2.0 * np.pi * j / k
    return np.array([r * np.cos(ang), r * np.sin(ang)])


def make_regression1d(kind, n, noise_sd=0.3, seed=0) -> LabeledDataset:
    """1D regression targets. ``linear``: y = 0.8x + 0.2 + eps on [-3,3].
    ``nonlinear``: y = 3(sin(1.5x) + 0.5 sin(3.1x)) + eps on [-3,3] with the
    interval (-0.6, 0.6) left uncovered."""
    if kind not in ("linear", "nonlinear"):
        raise ValueError(f"unknown regression kind {kind!r}")
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    if kind == "linear":
        x = rng.uniform(-3.0, 3.0, n)
        f = 0.8 * x + 0.2
    else:
        u = rng.uniform(0.0, 1.0, n)
        # map uniformly onto [-3,-0.6] u [0.6,3] so the gap is exactly empty
        x = np.where(u < 0.5, -3.0 + u * 4.8, 0.6 + (u - 0.5) * 4.8)
        f = 3.0 * (np.sin(1.5 * x) + 0.5 * np.sin(3.1 * x))
    y = f + rng.normal(0.0, noise_sd, n)
    order = rng.permutation(n)
    return LabeledDataset(
        inputs=np.ascontiguousarray(x[order, None]),
        labels=np.ascontiguousarray(y[order]),
        problem_name=f"regression-{kind}",
        seed=int(seed),
        class_count=0,
    )


def split_by_halfplane(dataset, axis, threshold):
    """(points with input[axis] > threshold, the rest). 2D inputs only."""
    if dataset.inputs.shape[1] != 2:
        raise ValueError("halfplane split needs 2D inputs")
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    mask = dataset.inputs[:, axis] > threshold
    if mask.all() or not mask.any():
        raise ValueError("degenerate split: one half is empty")

    def _part(m, tag):
        return LabeledDataset(
            inputs=np.ascontiguousarray(dataset.inputs[m]),
            labels=np.ascontiguousarray(dataset.labels[m]),
            problem_name=f"{dataset.problem_name}:{tag}",
            seed=dataset.seed,
            class_count=dataset.class_count,
        )

    return _part(mask, "top"), _part(~mask, "bottom")


def to_csv(dataset, path):
    """Write ``x1[,x2],label`` rows, floats at 17 significant digits."""
    d = dataset.inputs.shape[1]
    cols = ",".join(f"x{i + 1}" for i in range(d))
    lines = [f"{cols},label"]
    for xi, yi in zip(dataset.inputs, dataset.labels):
        xs = ",".join(f"{v:.17g}" for v in xi)
        lab = f"{yi:d}" if dataset.class_count > 0 else f"{yi:.17g}"
        lines.append(f"{xs},{lab}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

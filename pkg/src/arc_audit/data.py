"""Datasets: sample matrix plus labels, CSV round-tripping and generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import InvalidInput, data_group_norm, p_norm_rows, parse_exponent


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of ``X`` are samples. Labels are +-1 (binary) or 0..K-1."""

    X: np.ndarray
    y: np.ndarray
    _norm_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim != 2 or X.shape[0] == 0:
            raise InvalidInput("dataset needs at least one sample")
        if y.shape != (X.shape[0],):
            raise InvalidInput(f"{X.shape[0]} samples but {y.shape} labels")
        if not np.all(np.isfinite(X)):
            raise InvalidInput("dataset has non-finite features")
        y = y.astype(np.int64)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def is_binary(self) -> bool:
        return bool(np.all(np.isin(self.y, (-1, 1))))

    def B(self, p) -> float:
        """||X||_{p,inf}, cached per exponent."""
        p = parse_exponent(p)
        if p not in self._norm_cache:
            self._norm_cache[p] = data_group_norm(self.X, p)
        return self._norm_cache[p]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])


def write_csv(data: Dataset, path) -> None:
    """Header f0..f{d-1},label; features with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(data.d)] + ["label"])
        for row, label in zip(data.X, data.y):
            w.writerow([f"{v:.17g}" for v in row] + [int(label)])


def read_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInput(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "label" or header[:-1] != [f"f{j}" for j in range(len(header) - 1)]:
        raise InvalidInput(f"{path}: header must be f0,...,f{{d-1}},label")
    if not body:
        raise InvalidInput(f"{path}: no samples")
    X = np.array([[float(v) for v in r[:-1]] for r in body], dtype=np.float64)
    y = np.array([int(r[-1]) for r in body], dtype=np.int64)
    return Dataset(X, y)


def clamp_radius(X: np.ndarray, B: float, p) -> np.ndarray:
    """Radially project rows so that max_i ||x_i||_p equals B exactly.

    Rows outside the ball are pulled onto its surface; if no row reaches B the
    largest one is rescaled to B.
    """
    X = np.array(X, dtype=np.float64)
    norms = p_norm_rows(X, p)
    over = norms > B
    X[over] *= (B / norms[over])[:, None]
    norms = p_norm_rows(X, p)
    i = int(np.argmax(norms))
    if norms[i] > 0:
        X[i] *= B / norms[i]
    return X


def gaussian_blobs(n: int, d: int, K: int = 2, *, separation: float = 2.0, noise: float = 1.0,
                   B: float | None = None, p=2, seed: int = 0, signed: bool = True) -> Dataset:
    """K isotropic Gaussian blobs with balanced classes.

    Class means are ``separation/2`` times random unit directions (antipodal
    for K=2). With ``B`` given, rows are clamped so ||X||_{p,inf} = B.
    Binary data uses labels +-1 unless ``signed`` is False, in which case
    class indices 0/1 are returned (for two-output heads).
    """
    if n < 1 or d < 1:
        raise InvalidInput("need n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    if K == 2:
        means = np.stack([u, -u]) * separation / 2
    else:
        M = rng.standard_normal((K, d))
        means = M / np.linalg.norm(M, axis=1, keepdims=True) * separation / 2
    cls = np.arange(n) % K
    rng.shuffle(cls)
    X = means[cls] + noise * rng.standard_normal((n, d))
    if B is not None:
        X = clamp_radius(X, B, p)
    y = np.where(cls == 0, 1, -1) if (K == 2 and signed) else cls
    return Dataset(X, y)


def tradeoff_blobs(n: int, d: int, *, robust_mean: float = 1.5, weak_mean: float = 0.08, weak_dims: int = 4,
                   weak_scale: float = 0.1, seed: int = 0, signed: bool = True) -> Dataset:
    """Two Gaussian blobs whose coordinates play three roles.

    Coordinate 0 is N(+-robust_mean, 1). The next ``weak_dims`` coordinates
    are N(+-weak_mean, weak_scale^2): jointly informative, but an l_inf
    perturbation larger than ``weak_mean`` erases them. The remaining
    coordinates are pure N(0, 1) noise. Standard training can use the weak
    coordinates; adversarial training cannot and has to fit the residual
    errors of coordinate 0 through the noise coordinates.
    """
    if n < 1 or d < weak_dims + 1 or weak_dims < 0:
        raise InvalidInput("need n >= 1 and d >= weak_dims + 1")
    if weak_scale <= 0:
        raise InvalidInput("weak_scale must be positive")
    rng = np.random.default_rng(seed)
    cls = np.arange(n) % 2
    rng.shuffle(cls)
    sign = np.where(cls == 0, 1.0, -1.0)
    X = rng.standard_normal((n, d))
    X[:, 0] += robust_mean * sign
    weak = slice(1, 1 + weak_dims)
    X[:, weak] = weak_scale * X[:, weak] + weak_mean * sign[:, None]
    y = sign.astype(np.int64) if signed else cls
    return Dataset(X, y)


def equal_entries_dataset(n: int, d: int, B: float, p=2, seed: int = 0, labels: str = "random") -> Dataset:
    """Every sample is the constant vector with ||x||_p = B (the lower-bound construction).

    Labels are seeded random signs, or all +1 with ``labels='positive'``.
    """
    if n < 1 or d < 1:
        raise InvalidInput("need n >= 1 and d >= 1")
    p = parse_exponent(p)
    entry = B if math.isinf(p) else B / d ** (1.0 / p)
    X = np.full((n, d), entry)
    if labels == "positive":
        y = np.ones(n, dtype=np.int64)
    else:
        y = np.random.default_rng(seed).choice([-1, 1], size=n)
    return Dataset(X, y)

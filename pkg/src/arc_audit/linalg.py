"""Matrix and vector norms used throughout the bounds.

Matrices and vectors are plain float64 numpy arrays. Group norms follow the
row convention: ``one_inf`` is the largest row 1-norm and ``two_one`` is the
sum of row 2-norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INF = math.inf

SPECTRAL_RTOL = 1e-10
SPECTRAL_MAX_ITER = 10_000


class InvalidInput(ValueError):
    """Raised when an argument violates a documented precondition."""


@dataclass(frozen=True)
class NormKind:
    """Which norm to apply. ``p`` is only used by the ``vector_p`` variant."""

    name: str
    p: float | None = None

    def __post_init__(self):
        if self.name not in {"frobenius", "one_inf", "two_one", "spectral", "vector_p"}:
            raise InvalidInput(f"unknown norm kind {self.name!r}")
        if self.name == "vector_p":
            if self.p is None or not self.p >= 1:
                raise InvalidInput(f"vector_p needs p >= 1, got {self.p}")

    @classmethod
    def parse(cls, text: str) -> "NormKind":
        aliases = {
            "fro": FROBENIUS, "frobenius": FROBENIUS,
            "1inf": ONE_INF, "one_inf": ONE_INF, "(1,inf)": ONE_INF,
            "21": TWO_ONE, "two_one": TWO_ONE,
            "spectral": SPECTRAL,
        }
        try:
            return aliases[text.lower()]
        except KeyError:
            raise InvalidInput(f"unknown norm {text!r}") from None


FROBENIUS = NormKind("frobenius")
ONE_INF = NormKind("one_inf")
TWO_ONE = NormKind("two_one")
SPECTRAL = NormKind("spectral")


def vector_p(p: float) -> NormKind:
    return NormKind("vector_p", float(p))


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInput(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix has non-finite entries")
    return A


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidInput(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInput("vector has non-finite entries")
    return v


def parse_exponent(p) -> float:
    """Accept floats, ints or the strings 'inf'/'infinity'."""
    if isinstance(p, str):
        if p.lower() in {"inf", "infinity", "∞"}:
            return INF
        p = float(p)
    p = float(p)
    if math.isnan(p) or p < 1:
        raise InvalidInput(f"norm exponent must be >= 1 or inf, got {p}")
    return p


def inv(p: float) -> float:
    """1/p with 1/inf = 0."""
    return 0.0 if math.isinf(p) else 1.0 / p


def dual_exponent(p: float) -> float:
    p = parse_exponent(p)
    if p == 1:
        return INF
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def vector_p_norm(v, p) -> float:
    p = parse_exponent(p)
    v = as_vector(v)
    return float(_p_norm_rows(v[None, :], p)[0])


def _p_norm_rows(X: np.ndarray, p: float) -> np.ndarray:
    """p-norm along the last axis."""
    a = np.abs(X)
    if math.isinf(p):
        return a.max(axis=-1) if a.shape[-1] else np.zeros(a.shape[:-1])
    if p == 1:
        return a.sum(axis=-1)
    if p == 2:
        return np.sqrt((a * a).sum(axis=-1))
    # scale by the max entry so large p does not overflow
    m = a.max(axis=-1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    return (safe[..., 0]) * ((a / safe) ** p).sum(axis=-1) ** (1.0 / p)


def p_norm_rows(X, p) -> np.ndarray:
    """Row-wise p-norms of a stack of vectors (last axis is the vector)."""
    return _p_norm_rows(np.asarray(X, dtype=np.float64), parse_exponent(p))


def spectral_norm(A) -> float:
    """Largest singular value by power iteration on A^T A.

    Starts from the normalized all-ones vector. Because a fixed start can be
    orthogonal to the top right-singular vector, the standard basis vectors are
    tried as well (for small matrices) and the largest estimate wins.
    """
    A = as_matrix(A)
    k = A.shape[1]
    starts = [np.ones(k) / math.sqrt(k)]
    if k <= 64:
        starts.extend(np.eye(k))
    else:
        starts.append(np.random.default_rng(0).standard_normal(k))
    return max(_power_iteration(A, v) for v in starts)


def _power_iteration(A: np.ndarray, v: np.ndarray) -> float:
    v = v / np.linalg.norm(v)
    sigma = 0.0
    for _ in range(SPECTRAL_MAX_ITER):
        u = A @ v
        w = A.T @ u
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return float(np.linalg.norm(u))
        new_sigma = math.sqrt(nw)  # ||A^T A v|| -> sigma_max^2 for unit v
        v = w / nw
        if abs(new_sigma - sigma) <= SPECTRAL_RTOL * new_sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
    return float(np.linalg.norm(A @ v))


def matrix_norm(A, kind: NormKind) -> float:
    A = as_matrix(A)
    if kind.name == "frobenius":
        return float(math.sqrt((A * A).sum()))
    if kind.name == "one_inf":
        return float(np.abs(A).sum(axis=1).max())
    if kind.name == "two_one":
        return float(np.sqrt((A * A).sum(axis=1)).sum())
    if kind.name == "spectral":
        return spectral_norm(A)
    return float(_p_norm_rows(A.reshape(1, -1), kind.p)[0])


def data_group_norm(X, p) -> float:
    """||X||_{p,inf}: the largest p-norm over the rows (samples) of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise InvalidInput("data matrix must be non-empty and 2-D")
    return float(_p_norm_rows(X, parse_exponent(p)).max())


def matvec_norm_bound_check(A, b, kind: NormKind) -> tuple[float, float]:
    """Return (||Ab||, ||A||·||b||) for the Frobenius/2-norm or (1,inf)/inf-norm pairing."""
    A = as_matrix(A)
    b = as_vector(b)
    if A.shape[1] != b.shape[0]:
        raise InvalidInput(f"dimension mismatch: A is {A.shape}, b has {b.shape[0]}")
    Ab = A @ b
    if kind.name == "frobenius":
        return vector_p_norm(Ab, 2), matrix_norm(A, FROBENIUS) * vector_p_norm(b, 2)
    if kind.name == "one_inf":
        return vector_p_norm(Ab, INF), matrix_norm(A, ONE_INF) * vector_p_norm(b, INF)
    raise InvalidInput(f"no matrix-vector inequality for {kind.name}")


def dual_dimension_factor(d: int, r, p) -> float:
    """max{1, d^(1 - 1/r - 1/p)}, bounding ||x'||_{r*} by (B + eps)."""
    if d < 1:
        raise InvalidInput("dimension must be >= 1")
    r, p = parse_exponent(r), parse_exponent(p)
    return max(1.0, float(d) ** (1.0 - inv(r) - inv(p)))


def project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of each row of ``v`` (last axis) onto the l1 ball.

    Sorted-threshold algorithm: sort magnitudes, find the largest index whose
    running threshold stays positive, soft-threshold by it. Rows already
    inside the ball are returned unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    if radius <= 0:
        return np.zeros_like(v)
    a = np.abs(v)
    inside = a.sum(axis=-1) <= radius
    if np.all(inside):
        return v.copy()
    u = -np.sort(-a, axis=-1)
    css = np.cumsum(u, axis=-1)
    k = np.arange(1, v.shape[-1] + 1)
    cond = u * k > (css - radius)
    rho = v.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = (np.take_along_axis(css, rho[..., None], axis=-1) - radius) / (rho[..., None] + 1.0)
    w = np.sign(v) * np.maximum(a - theta, 0.0)
    return np.where(inside[..., None], v, w)


def project_norm_ball(W: np.ndarray, kind: NormKind, radius: float) -> np.ndarray:
    """Project a matrix (or a stack of matrices, leading axes) onto a norm ball.

    Frobenius: radial rescale. (1,inf): each row onto the l1 ball of ``radius``.
    """
    W = np.asarray(W, dtype=np.float64)
    if kind.name == "frobenius":
        nrm = np.sqrt((W * W).sum(axis=(-2, -1), keepdims=True))
        if radius <= 0:
            return np.zeros_like(W)
        scale = np.where(nrm > radius, radius / np.where(nrm > 0, nrm, 1.0), 1.0)
        return W * scale
    if kind.name == "one_inf":
        return project_l1_ball(W, radius)
    raise InvalidInput(f"projection onto {kind.name} ball is not supported")

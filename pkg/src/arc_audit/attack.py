"""Inner minimization of a scalar network objective over an l_p ball.

All solvers minimize. For binary heads the objective is y f(x'); for
multi-class heads it is a class-pair difference, the margin operator, or
the negative cross-entropy (the usual PGD training objective).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .linalg import INF, InvalidInput, dual_exponent, p_norm_rows, parse_exponent, vector_p_norm
from .network import MLP, backward_pass, forward_pass

SOLVERS = ("exact_linear", "pgd", "fgsm", "grid")
GRID_MAX_DIM = 3
GRID_CHUNK = 1 << 18


@dataclass(frozen=True)
class AttackSpec:
    p: float = INF
    epsilon: float = 0.1
    steps: int = 20
    step_size: float | None = None  # None -> epsilon / 8
    restarts: int = 5
    solver: str = "pgd"
    resolution: int = 101
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "p", parse_exponent(self.p))
        if not self.epsilon >= 0:
            raise InvalidInput("epsilon must be >= 0")
        if self.solver not in SOLVERS:
            raise InvalidInput(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        if self.solver == "pgd" and self.steps < 1:
            raise InvalidInput("PGD needs steps >= 1")
        if self.solver == "grid" and self.resolution < 2:
            raise InvalidInput("grid resolution must be >= 2")
        if self.restarts < 1:
            raise InvalidInput("restarts must be >= 1")

    @property
    def step(self) -> float:
        return self.epsilon / 8 if self.step_size is None else self.step_size

    def evaluation(self) -> "AttackSpec":
        """Test-time strength: 40 steps instead of 20."""
        return replace(self, steps=max(self.steps, 40))


@dataclass
class AttackResult:
    x_star: np.ndarray
    value: np.ndarray | float
    solver_used: str


@dataclass(frozen=True, eq=False)
class Objective:
    """Scalar head selected from the network output; labels are per-sample arrays."""

    kind: str
    y: np.ndarray
    k: np.ndarray | None = None

    @classmethod
    def binary(cls, y):
        return cls("binary", np.atleast_1d(np.asarray(y, dtype=np.float64)))

    @classmethod
    def pair(cls, y, k):
        return cls("pair", np.atleast_1d(np.asarray(y, dtype=np.int64)),
                   np.atleast_1d(np.asarray(k, dtype=np.int64)))

    @classmethod
    def margin(cls, y):
        return cls("margin", np.atleast_1d(np.asarray(y, dtype=np.int64)))

    @classmethod
    def neg_cross_entropy(cls, y):
        return cls("neg_ce", np.atleast_1d(np.asarray(y, dtype=np.int64)))

    @classmethod
    def for_labels(cls, net: MLP, y):
        """y f(x) for binary heads, the margin operator otherwise."""
        return cls.binary(y) if net.dims[-1] == 1 else cls.margin(y)

    def value_and_grad(self, out: np.ndarray):
        """Objective values (n,) and d/d(out) (n, h_l) for outputs of shape (n, h_l)."""
        n, K = out.shape
        d = np.zeros_like(out)
        rows = np.arange(n)
        if self.kind == "binary":
            if K != 1:
                raise InvalidInput("binary objective needs a single-output head")
            d[:, 0] = self.y
            return self.y * out[:, 0], d
        if self.kind == "pair":
            d[rows, self.y] += 1.0
            d[rows, self.k] -= 1.0
            return out[rows, self.y] - out[rows, self.k], d
        if self.kind == "margin":
            masked = np.where(np.arange(K) == self.y[:, None], -np.inf, out)
            k = masked.argmax(axis=1)
            d[rows, self.y] = 1.0
            d[rows, k] = -1.0
            return out[rows, self.y] - out[rows, k], d
        if self.kind == "neg_ce":
            shifted = out - out.max(axis=1, keepdims=True)
            logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            d = -np.exp(logp)
            d[rows, self.y] += 1.0
            return logp[rows, self.y], d
        raise InvalidInput(f"unknown objective {self.kind!r}")


def _evaluate(net: MLP, X, obj: Objective, with_grad: bool):
    out, pre, inputs = forward_pass(net.weights, X, net.activation)
    val, d_out = obj.value_and_grad(out)
    if not with_grad:
        return val, None
    _, dX = backward_pass(net.weights, pre, inputs, d_out, net.activation,
                          need_weights=False, need_input=True)
    return val, dX


def objective_value(net: MLP, X, obj: Objective) -> np.ndarray:
    return _evaluate(net, np.atleast_2d(X), obj, False)[0]


# -- exact linear ------------------------------------------------------------------

def inner_min_linear(w, x, y: float, p, eps: float) -> AttackResult:
    """Exact minimizer of y w^T x' over ||x' - x||_p <= eps.

    value = y w^T x - eps ||w||_{p*}; the minimizer moves against the dual
    direction of w (sign(w) for p=inf, w/||w||_2 for p=2, the largest
    coordinate for p=1).
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.shape != x.shape or w.ndim != 1:
        raise InvalidInput("w and x must be vectors of equal length")
    p = parse_exponent(p)
    q = dual_exponent(p)
    dual = vector_p_norm(w, q)
    value = y * float(w @ x) - eps * dual
    if eps == 0 or dual == 0:
        return AttackResult(x.copy(), y * float(w @ x), "exact_linear")
    if p == 1:
        direction = np.zeros_like(w)
        k = int(np.argmax(np.abs(w)))
        direction[k] = np.sign(w[k])
    elif math.isinf(p):
        direction = np.sign(w)
    else:
        a = np.abs(w) / dual
        direction = np.sign(w) * a ** (q - 1.0)
    return AttackResult(x - eps * y * direction, value, "exact_linear")


# -- PGD ------------------------------------------------------------------

def uniform_in_ball(rng: np.random.Generator, n: int, d: int, p: float, eps: float) -> np.ndarray:
    """n uniform samples from the l_p ball of radius eps (p in {2, inf})."""
    if math.isinf(p):
        return rng.uniform(-eps, eps, size=(n, d))
    if p == 2:
        g = rng.standard_normal((n, d))
        g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
        r = rng.uniform(size=(n, 1)) ** (1.0 / d)
        return eps * r * g
    raise InvalidInput("uniform ball sampling supports p in {2, inf}")


def project_ball(Z: np.ndarray, X: np.ndarray, p: float, eps: float) -> np.ndarray:
    delta = Z - X
    if math.isinf(p):
        return X + np.clip(delta, -eps, eps)
    nrm = np.linalg.norm(delta, axis=-1, keepdims=True)
    scale = np.where(nrm > eps, eps / np.where(nrm > 0, nrm, 1.0), 1.0)
    return X + delta * scale


def step_direction(g: np.ndarray, p: float) -> np.ndarray:
    if math.isinf(p):
        return np.sign(g)
    nrm = np.linalg.norm(g, axis=-1, keepdims=True)
    return np.where(nrm > 0, g / np.where(nrm > 0, nrm, 1.0), 0.0)


def _check_pgd(p: float):
    if not (p == 2 or math.isinf(p)):
        raise InvalidInput(f"PGD supports p in {{2, inf}} only, got p={p}")


def inner_min_pgd(net: MLP, x, objective: Objective, spec: AttackSpec,
                  rng: np.random.Generator | None = None) -> AttackResult:
    """Projected gradient descent with restarts, vectorized over samples.

    Restart 0 starts at x itself, later restarts at uniform points in the
    ball. The best iterate (start included) is kept, so the returned value
    never exceeds the objective at x. Ties keep the earliest restart.
    """
    p = spec.p
    _check_pgd(p)
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    single = np.ndim(x) == 1
    best_v, _ = _evaluate(net, X, objective, False)
    best_x = X.copy()
    if spec.epsilon > 0:
        if rng is None:
            rng = np.random.default_rng(spec.seed)
        for r in range(spec.restarts):
            Z = X.copy() if r == 0 else X + uniform_in_ball(rng, *X.shape, p, spec.epsilon)
            for t in range(spec.steps + 1):
                v, g = _evaluate(net, Z, objective, t < spec.steps)
                better = v < best_v
                best_v = np.where(better, v, best_v)
                best_x[better] = Z[better]
                if t < spec.steps:
                    Z = project_ball(Z - spec.step * step_direction(g, p), X, p, spec.epsilon)
    if single:
        return AttackResult(best_x[0], float(best_v[0]), "pgd")
    return AttackResult(best_x, best_v, "pgd")


def fgsm_point(net: MLP, x, objective: Objective, p, eps: float) -> AttackResult:
    """One gradient step of length eps from x, projected.

    Same as PGD with steps=1 and step_size=eps, except that the stepped point
    is returned even if it is worse than x.
    """
    p = parse_exponent(p)
    _check_pgd(p)
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    v, g = _evaluate(net, X, objective, eps > 0)
    Z = X.copy()
    if eps > 0:
        Z = project_ball(X - eps * step_direction(g, p), X, p, eps)
        v, _ = _evaluate(net, Z, objective, False)
    if np.ndim(x) == 1:
        return AttackResult(Z[0], float(v[0]), "fgsm")
    return AttackResult(Z, v, "fgsm")


# -- grid oracle ---------------------------------------------------------------

def ball_grid(d: int, p, resolution: int) -> np.ndarray:
    """Unit-radius grid offsets: the resolution^d box grid filtered to ||u||_p <= 1.

    Coordinates are (2k - (r-1)) / (r-1), so grids whose resolutions nest
    (11 -> 101 -> 401) share points bit-for-bit.
    """
    if d > GRID_MAX_DIM:
        raise InvalidInput(f"grid oracle refuses d={d} > {GRID_MAX_DIM} (cost grows as resolution^d)")
    if resolution < 2:
        raise InvalidInput("grid resolution must be >= 2")
    p = parse_exponent(p)
    r1 = resolution - 1
    axis = (2.0 * np.arange(resolution) - r1) / r1
    U = np.array(list(itertools.product(axis, repeat=d)), dtype=np.float64)
    keep = p_norm_rows(U, p) <= 1.0 + 1e-12
    return U[keep]


def grid_points(X: np.ndarray, p, eps: float, resolution: int) -> np.ndarray:
    """Candidate points for every sample: shape (n, G, d). G = 1 when eps = 0."""
    X = np.atleast_2d(X)
    if eps == 0:
        return X[:, None, :].copy()
    U = ball_grid(X.shape[1], p, resolution)
    return X[:, None, :] + eps * U[None, :, :]


def inner_min_grid(net: MLP, x, objective: Objective, p, eps: float, resolution: int = 101) -> AttackResult:
    """Brute-force minimum over a uniform grid on the ball (d <= 3).

    Deterministic; ties go to the first grid point in lexicographic order.
    """
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    single = np.ndim(x) == 1
    if X.shape[1] > GRID_MAX_DIM:
        raise InvalidInput(f"grid oracle refuses d={X.shape[1]} > {GRID_MAX_DIM}")
    n, d = X.shape
    U = np.zeros((1, d)) if eps == 0 else ball_grid(d, p, resolution)
    G = U.shape[0]
    best_v = np.full(n, np.inf)
    best_x = X.copy()
    per_chunk = max(1, GRID_CHUNK // max(n, 1))
    for start in range(0, G, per_chunk):
        pts = X[:, None, :] + eps * U[None, start:start + per_chunk, :]
        g = pts.shape[1]
        flat = pts.reshape(n * g, d)
        obj = Objective(objective.kind, np.repeat(objective.y, g),
                        None if objective.k is None else np.repeat(objective.k, g))
        v, _ = _evaluate(net, flat, obj, False)
        v = v.reshape(n, g)
        idx = v.argmin(axis=1)
        vmin = v[np.arange(n), idx]
        better = vmin < best_v
        best_v = np.where(better, vmin, best_v)
        best_x[better] = pts[np.arange(n), idx][better]
    if single:
        return AttackResult(best_x[0], float(best_v[0]), "grid")
    return AttackResult(best_x, best_v, "grid")


def inner_min(net: MLP, x, objective: Objective, spec: AttackSpec,
              rng: np.random.Generator | None = None) -> AttackResult:
    """Dispatch on ``spec.solver``."""
    if spec.solver == "grid":
        return inner_min_grid(net, x, objective, spec.p, spec.epsilon, spec.resolution)
    if spec.solver == "fgsm":
        return fgsm_point(net, x, objective, spec.p, spec.epsilon)
    if spec.solver == "exact_linear":
        if net.depth != 1 or net.dims[-1] != 1 or objective.kind != "binary":
            raise InvalidInput("exact_linear needs a single-layer binary network")
        X = np.atleast_2d(np.asarray(x, dtype=np.float64))
        w = net.weights[0][0]
        res = [inner_min_linear(w, xi, yi, spec.p, spec.epsilon) for xi, yi in zip(X, objective.y)]
        xs = np.array([r.x_star for r in res])
        vs = np.array([r.value for r in res])
        if np.ndim(x) == 1:
            return AttackResult(xs[0], float(vs[0]), "exact_linear")
        return AttackResult(xs, vs, "exact_linear")
    return inner_min_pgd(net, x, objective, spec, rng)

"""Monte-Carlo estimates of standard and adversarial Rademacher complexity.

For each sign vector sigma the supremum over the weight-norm-constrained
class is approximated from below:

1. a bank of random class members (shared by all draws, zero network
   included) is scored against sigma with one matrix product;
2. the best ``restarts`` bank members are refined by projected, layer-wise
   normalized gradient ascent on the weights. The gradient of the robustified
   value uses the inner minimizer found for the current weights (Danskin).

Every value reported is attained by some member of the class, so the
estimate is a lower estimate of the supremum-based complexity (up to the
accuracy of the inner minimizer).
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackSpec, ball_grid, project_ball, step_direction, uniform_in_ball
from .data import Dataset
from .linalg import FROBENIUS, ONE_INF, InvalidInput, NormKind, matrix_norm, project_norm_ball
from .network import RELU, MLP, ActivationSpec, backward_pass, forward_pass, ramp_derivative

POINT_BUDGET = 2_000_000  # floats per layer activation held at once


@dataclass(frozen=True)
class FunctionClassSpec:
    """Networks with dims h_0..h_l and ||W_j|| <= M_j in the given norm."""

    dims: tuple
    norm_kind: NormKind = FROBENIUS
    budgets: tuple = ()
    activation: ActivationSpec = RELU

    def __post_init__(self):
        dims = tuple(int(h) for h in self.dims)
        budgets = tuple(float(m) for m in self.budgets)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "budgets", budgets)
        if len(dims) < 2 or min(dims) < 1:
            raise InvalidInput(f"invalid dims {dims}")
        if len(budgets) != len(dims) - 1:
            raise InvalidInput(f"{len(dims) - 1} layers but {len(budgets)} budgets")
        if min(budgets) < 0:
            raise InvalidInput("norm budgets must be >= 0")
        if self.norm_kind not in (FROBENIUS, ONE_INF):
            raise InvalidInput("class norm must be Frobenius or (1,inf)")

    @property
    def depth(self) -> int:
        return len(self.dims) - 1

    @property
    def n_params(self) -> int:
        return self.sum_hh

    @property
    def sum_hh(self) -> int:
        return sum(self.dims[j] * self.dims[j + 1] for j in range(self.depth))

    @property
    def prod_budgets(self) -> float:
        return float(np.prod(self.budgets))

    @property
    def width(self) -> int:
        return max(self.dims)

    @property
    def lipschitz(self) -> float:
        return self.activation.lipschitz

    def contains(self, net: MLP, rtol: float = 1e-9) -> bool:
        if net.dims != list(self.dims):
            return False
        return all(matrix_norm(W, self.norm_kind) <= M * (1 + rtol) + 1e-300
                   for W, M in zip(net.weights, self.budgets))

    def project(self, weights):
        return [project_norm_ball(W, self.norm_kind, M) for W, M in zip(weights, self.budgets)]

    def sample(self, rng: np.random.Generator, count: int, boundary_fraction: float = 0.5):
        """``count`` stacked class members; the first is the zero network.

        A ``boundary_fraction`` share lies on the norm sphere of every layer,
        the rest at uniformly drawn radius fractions.
        """
        stack = []
        n_boundary = int(round(boundary_fraction * count))
        for j, M in enumerate(self.budgets):
            shape = (count, self.dims[j + 1], self.dims[j])
            G = rng.standard_normal(shape)
            if self.norm_kind == FROBENIUS:
                G /= np.sqrt((G * G).sum(axis=(1, 2), keepdims=True))
            else:
                G /= np.abs(G).sum(axis=2, keepdims=True)
            radius = np.ones((count, 1, 1))
            radius[n_boundary:] = rng.uniform(size=(count - n_boundary, 1, 1))
            W = M * radius * G
            W[0] = 0.0
            stack.append(W)
        return stack

    def to_json(self) -> dict:
        return {"dims": list(self.dims), "norm": self.norm_kind.name,
                "budgets": list(self.budgets), "activation": self.activation.to_json()}

    @classmethod
    def from_json(cls, obj) -> "FunctionClassSpec":
        return cls(tuple(obj["dims"]), NormKind.parse(obj.get("norm", "frobenius")),
                   tuple(obj["budgets"]), ActivationSpec.from_json(obj.get("activation", "relu")))


@dataclass(frozen=True)
class SupBudget:
    """Search effort per sigma draw."""

    restarts: int = 10
    steps: int = 200
    random_samples: int = 500
    step_size: float = 0.2  # as a fraction of each layer's budget, decayed by 1/sqrt(t+1)

    def __post_init__(self):
        if self.restarts < 0 or self.steps < 0 or self.random_samples < 1:
            raise InvalidInput("invalid sup budget")

    def to_json(self) -> dict:
        return {"restarts": self.restarts, "steps": self.steps,
                "random_samples": self.random_samples, "step_size": self.step_size}


@dataclass
class RadEstimate:
    mean: float
    stderr: float
    draws: int
    sup_values: np.ndarray = field(repr=False)
    sigma_hashes: list = field(repr=False, default_factory=list)
    bank_values: np.ndarray | None = field(repr=False, default=None)
    config: dict = field(default_factory=dict)

    @property
    def low_confidence(self) -> bool:
        return self.draws < 2

    def to_json(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "draws": self.draws,
                "low_confidence": self.low_confidence, "config": self.config}

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["draw_index", "sigma_pattern_hash", "sup_value"])
            for i, (h, v) in enumerate(zip(self.sigma_hashes, self.sup_values)):
                w.writerow([i, h, f"{v:.17g}"])


@dataclass(frozen=True)
class GenBoundInput:
    empirical_risk: float
    rc_term: float
    loss_range_C: float = 1.0
    delta: float = 0.05
    n: int = 1

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise InvalidInput("delta must lie in (0, 1)")
        if not self.loss_range_C > 0:
            raise InvalidInput("loss range C must be positive")
        if self.n < 1:
            raise InvalidInput("n must be >= 1")


def gen_bound_rhs(inp: GenBoundInput) -> float:
    """R_n + 2 RC + 3 C sqrt(ln(2/delta) / (2n))."""
    return (inp.empirical_risk + 2.0 * inp.rc_term
            + 3.0 * inp.loss_range_C * math.sqrt(math.log(2.0 / inp.delta) / (2.0 * inp.n)))


# -- summand evaluators -------------------------------------------------------------
#
# An evaluator maps a stack of weights (list of (S, h_j, h_{j-1}) arrays) to
# the per-sample summands (S, n) and, given coefficients c (S, n), to the
# weight gradient of sum_i c_i * summand_i.

class _Link:
    """Identity, or the ramp loss applied to the robust value."""

    def __init__(self, gamma: float | None):
        self.gamma = gamma

    def __call__(self, v):
        if self.gamma is None:
            return v
        return np.clip(1.0 - v / self.gamma, 0.0, 1.0)

    def derivative(self, v):
        if self.gamma is None:
            return np.ones_like(v)
        return ramp_derivative(v, self.gamma)


def _chunk_size(S_total, points, width):
    return max(1, min(S_total, POINT_BUDGET // max(1, points * width)))


class _GridEvaluator:
    """Inner minimum over fixed candidate points per sample (clean when G = 1)."""

    def __init__(self, cls: FunctionClassSpec, data: Dataset, points: np.ndarray, multiclass: bool, link: _Link):
        self.cls, self.link, self.multiclass = cls, link, multiclass
        self.points = points  # (n, G, d)
        self.n, self.G, _ = points.shape
        self.flat = points.reshape(self.n * self.G, -1)
        self.y = data.y
        if multiclass:
            K = cls.dims[-1]
            self.onehot = np.arange(K) == self.y[:, None]  # (n, K)

    def _robust(self, out):
        """out (S, n, G, h_l) -> robust value (S, n) and argmin (S, n), competitor (S, n)."""
        if not self.multiclass:
            v = self.y[None, :, None] * out[..., 0]
            idx = v.argmin(axis=2)
            return np.take_along_axis(v, idx[..., None], axis=2)[..., 0], idx
        true = np.where(self.onehot[None, :, None, :], out, 0.0).sum(axis=-1)
        other = np.where(self.onehot[None, :, None, :], -np.inf, out).max(axis=-1)
        m = true - other
        idx = m.argmin(axis=2)
        return np.take_along_axis(m, idx[..., None], axis=2)[..., 0], idx

    def values(self, weights, want_argmin=False):
        S = weights[0].shape[0]
        out, _, _ = forward_pass(weights, self.flat, self.cls.activation)
        out = out.reshape(S, self.n, self.G, -1)
        v, idx = self._robust(out)
        return (v, idx) if want_argmin else v

    def values_and_grads(self, weights, coeff):
        v, idx = self.values(weights, want_argmin=True)
        Xs = self.points[np.arange(self.n)[None, :], idx]  # (S, n, d)
        return v, self._grads_at(weights, Xs, v, coeff)

    def _grads_at(self, weights, Xs, v, coeff):
        out, pre, inputs = forward_pass(weights, Xs, self.cls.activation)
        scale = coeff * self.link.derivative(v)
        if not self.multiclass:
            d_out = (scale * self.y[None, :])[..., None]
        else:
            K = out.shape[-1]
            other = np.where(self.onehot[None], -np.inf, out)
            k_star = other.argmax(axis=-1)
            d_out = (self.onehot[None].astype(np.float64)
                     - (np.arange(K) == k_star[..., None])) * scale[..., None]
        grads, _ = backward_pass(weights, pre, inputs, d_out, self.cls.activation)
        return grads


class _PGDEvaluator(_GridEvaluator):
    """Inner minimum by PGD on the inputs, run separately for every stack member."""

    def __init__(self, cls, data, attack: AttackSpec, multiclass, link):
        super().__init__(cls, data, data.X[:, None, :], multiclass, link)
        self.X = data.X
        self.attack = attack
        rng = np.random.default_rng([attack.seed, 7])
        self.noise = [uniform_in_ball(rng, *self.X.shape, attack.p, attack.epsilon)
                      for _ in range(attack.restarts - 1)]

    def _pgd(self, weights, obj_grad):
        """Minimize per (stack member, sample); obj_grad(out) -> (value, d_out)."""
        a = self.attack
        S = weights[0].shape[0]
        X = np.broadcast_to(self.X, (S,) + self.X.shape)
        best_x = X.copy()
        out, _, _ = forward_pass(weights, X, self.cls.activation)
        best_v, _ = obj_grad(out)
        starts = [X] + [X + nz for nz in self.noise]
        for Z in starts:
            Z = Z.copy()
            for t in range(a.steps + 1):
                out, pre, inputs = forward_pass(weights, Z, self.cls.activation)
                v, d_out = obj_grad(out)
                better = v < best_v
                best_v = np.where(better, v, best_v)
                best_x[better] = Z[better]
                if t < a.steps:
                    _, g = backward_pass(weights, pre, inputs, d_out, self.cls.activation,
                                         need_weights=False, need_input=True)
                    Z = project_ball(Z - a.step * step_direction(g, a.p), X, a.p, a.epsilon)
        return best_v, best_x

    def _search(self, weights):
        if not self.multiclass:
            def obj(out):
                yv = self.y[None, :]
                return yv * out[..., 0], np.broadcast_to(yv, out.shape[:-1])[..., None]
            return self._pgd(weights, obj)
        K = self.cls.dims[-1]
        best_v = best_x = None
        for k in range(K):
            active = self.y != k
            if not active.any():
                continue
            ek = (np.arange(K) == k).astype(np.float64)

            def obj(out, ek=ek):
                diff = np.where(self.onehot[None], out, 0.0).sum(-1) - out[..., np.argmax(ek)]
                v = np.where(active[None], diff, np.inf)
                d = (self.onehot[None].astype(np.float64) - ek) * active[None, :, None]
                return v, d
            v, x = self._pgd(weights, obj)
            if best_v is None:
                best_v, best_x = v, x
            else:
                better = v < best_v
                best_v = np.where(better, v, best_v)
                best_x[better] = x[better]
        return best_v, best_x

    def values(self, weights, want_argmin=False):
        v, x = self._search(weights)
        return (v, x) if want_argmin else v

    def values_and_grads(self, weights, coeff):
        v, Xs = self._search(weights)
        return v, self._grads_at(weights, Xs, v, coeff)


def _make_evaluator(cls, data, attack, multiclass, gamma):
    link = _Link(gamma)
    d = data.d
    if data.d != cls.dims[0]:
        raise InvalidInput(f"data dimension {d} does not match class input {cls.dims[0]}")
    if attack is None or attack.epsilon == 0:
        return _GridEvaluator(cls, data, data.X[:, None, :], multiclass, link)
    if attack.solver == "pgd" or d > 3:
        if attack.solver == "grid":
            pass  # grid refuses d > 3; fall back to PGD
        return _PGDEvaluator(cls, data, attack, multiclass, link)
    U = ball_grid(d, attack.p, attack.resolution)
    points = data.X[:, None, :] + attack.epsilon * U[None, :, :]
    return _GridEvaluator(cls, data, points, multiclass, link)


# -- the estimator ----------------------------------------------------------------

def _sigmas(seed: int, draws: int, n: int) -> np.ndarray:
    out = np.empty((draws, n))
    for t in range(draws):
        out[t] = np.random.default_rng([seed, 1, t]).integers(0, 2, size=n) * 2.0 - 1.0
    return out


def sigma_hash(sigma) -> str:
    bits = np.packbits(np.asarray(sigma) > 0).tobytes()
    return hashlib.sha1(bits).hexdigest()[:16]


def _link_values(ev, v):
    return ev.link(v)


def _bank_values(ev, bank):
    C = bank[0].shape[0]
    chunk = _chunk_size(C, ev.n * ev.G, max(ev.cls.dims))
    rows = []
    for s in range(0, C, chunk):
        v = ev.values([W[s:s + chunk] for W in bank])
        rows.append(ev.link(v))
    return np.concatenate(rows, axis=0)


def _ascend(ev, cls: FunctionClassSpec, starts, coeff, budget: SupBudget):
    """Projected normalized gradient ascent for a stack; returns best objective per member."""
    W = [w.copy() for w in starts]
    best = np.full(coeff.shape[0], -np.inf)
    for t in range(budget.steps + 1):
        v, grads = ev.values_and_grads(W, coeff)
        obj = (coeff * ev.link(v)).sum(axis=1)
        best = np.maximum(best, obj)
        if t == budget.steps:
            break
        eta = budget.step_size / math.sqrt(t + 1.0)
        new = []
        for Wj, Gj, M in zip(W, grads, cls.budgets):
            nrm = np.sqrt((Gj * Gj).sum(axis=(1, 2), keepdims=True))
            stepj = np.where(nrm > 0, Gj / np.where(nrm > 0, nrm, 1.0), 0.0)
            new.append(Wj + eta * M * stepj)
        W = cls.project(new)
    return best


def _estimate(cls: FunctionClassSpec, data: Dataset, attack, multiclass, gamma,
              draws: int, budget: SupBudget, seed: int, threads: int = 1) -> RadEstimate:
    if draws < 1:
        raise InvalidInput("draws must be >= 1")
    ev = _make_evaluator(cls, data, attack, multiclass, gamma)
    n = data.n
    sig = _sigmas(seed, draws, n)
    bank = cls.sample(np.random.default_rng([seed, 2]), budget.random_samples)
    V = _bank_values(ev, bank)  # (C, n)
    scores = sig @ V.T / n  # (draws, C)
    sup = scores.max(axis=1)

    R = min(budget.restarts, V.shape[0])
    if R > 0 and budget.steps > 0:
        top = np.argsort(-scores, axis=1, kind="stable")[:, :R]  # (draws, R)
        pair_draw = np.repeat(np.arange(draws), R)
        pair_start = top.reshape(-1)
        chunk = _chunk_size(len(pair_draw), n * ev.G, max(cls.dims))

        def run(s):
            sl = slice(s, s + chunk)
            starts = [W[pair_start[sl]] for W in bank]
            coeff = sig[pair_draw[sl]] / n
            return s, _ascend(ev, cls, starts, coeff, budget)

        offsets = range(0, len(pair_draw), chunk)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                results = list(pool.map(run, offsets))
        else:
            results = [run(s) for s in offsets]
        ascent = np.empty(len(pair_draw))
        for s, best in results:
            ascent[s:s + len(best)] = best
        sup = np.maximum(sup, ascent.reshape(draws, R).max(axis=1))

    mean = float(sup.mean())
    stderr = float(sup.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    config = {"class": cls.to_json(), "draws": draws, "seed": seed, "sup_budget": budget.to_json(),
              "n": n, "multiclass": multiclass, "gamma": gamma}
    if attack is not None:
        config["attack"] = {"p": _p_json(attack.p), "epsilon": attack.epsilon,
                            "solver": "grid" if isinstance(ev, _GridEvaluator) and not isinstance(ev, _PGDEvaluator)
                            else "pgd", "resolution": attack.resolution, "steps": attack.steps,
                            "restarts": attack.restarts}
    return RadEstimate(mean, stderr, draws, sup, [sigma_hash(s) for s in sig], V, config)


def _p_json(p):
    return "inf" if math.isinf(p) else p


def _check_binary(data: Dataset):
    if not data.is_binary:
        raise InvalidInput("binary estimators need labels in {-1, +1}")


def estimate_rc(cls: FunctionClassSpec, data: Dataset, draws: int = 200, budget: SupBudget = SupBudget(),
                seed: int = 0, gamma: float | None = None, threads: int = 1) -> RadEstimate:
    """E_sigma sup_f (1/n) sum_i sigma_i y_i f(x_i), estimated from below.

    With ``gamma`` the summand is the ramp loss of y_i f(x_i) instead.
    """
    _check_binary(data)
    if cls.dims[-1] != 1:
        raise InvalidInput("binary estimators need a single-output class")
    return _estimate(cls, data, None, False, gamma, draws, budget, seed, threads)


def estimate_arc(cls: FunctionClassSpec, data: Dataset, attack: AttackSpec, draws: int = 200,
                 budget: SupBudget = SupBudget(), seed: int = 0, gamma: float | None = None,
                 threads: int = 1) -> RadEstimate:
    """Adversarial Rademacher complexity: each y_i f(x_i) replaced by its infimum over the ball.

    The inner infimum uses the grid oracle when d <= 3 (unless PGD is
    requested) and PGD otherwise. eps = 0 reduces to ``estimate_rc`` exactly.
    """
    _check_binary(data)
    if cls.dims[-1] != 1:
        raise InvalidInput("binary estimators need a single-output class")
    return _estimate(cls, data, attack, False, gamma, draws, budget, seed, threads)


def estimate_arc_multiclass(cls: FunctionClassSpec, data: Dataset, attack: AttackSpec | None, gamma: float,
                            draws: int = 200, budget: SupBudget = SupBudget(), seed: int = 0,
                            threads: int = 1) -> RadEstimate:
    """Complexity of the adversarial ramp loss max_{x'} phi_gamma(M(f(x'), y))."""
    K = cls.dims[-1]
    if K < 2:
        raise InvalidInput("multi-class estimator needs K >= 2 outputs")
    if not gamma > 0:
        raise InvalidInput("gamma must be positive")
    if data.y.min() < 0 or data.y.max() >= K:
        raise InvalidInput(f"labels must lie in 0..{K - 1}")
    return _estimate(cls, data, attack, True, gamma, draws, budget, seed, threads)


def robust_values(cls: FunctionClassSpec, net: MLP, data: Dataset, attack: AttackSpec | None,
                  multiclass: bool = False) -> np.ndarray:
    """Per-sample robustified value inf_{x'} y f(x') (or the robust margin) for one network."""
    ev = _make_evaluator(cls, data, attack, multiclass, None)
    return ev.values([W[None] for W in net.weights])[0]

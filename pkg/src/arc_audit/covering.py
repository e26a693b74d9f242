"""Covering-number machinery: diameter, cover counts, the robustified weight
perturbation inequality and Dudley's entropy integral.

Cover counts are handled in log space (natural log) and never enumerated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .attack import AttackSpec
from .data import Dataset
from .linalg import FROBENIUS, InvalidInput, dual_dimension_factor, matrix_norm, parse_exponent
from .network import MLP
from .rademacher import FunctionClassSpec, robust_values

SIMPSON_MAX_PANELS = 2 ** 20
TAIL_CUTOFF = 60.0  # in the log-scale variable; the remaining tail is below e^-60


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoverSpec:
    per_layer_delta: tuple
    norm_kind: object = FROBENIUS

    def __post_init__(self):
        deltas = tuple(float(x) for x in self.per_layer_delta)
        if min(deltas) < 0:
            raise InvalidInput("cover radii must be >= 0")
        object.__setattr__(self, "per_layer_delta", deltas)


def ball_cover_count(W: float, eps: float, dim: int, simplified: bool = False) -> float:
    """log of the cover count (1 + 2W/eps)^dim of a radius-W norm ball.

    ``simplified`` uses (3W/eps)^dim, which dominates the exact count once
    eps <= W; above that the exact form is returned.
    """
    if not eps > 0:
        raise InvalidInput("cover radius must be positive")
    if W < 0 or dim < 0:
        raise InvalidInput("need W >= 0 and dim >= 0")
    if simplified and W >= eps:
        return dim * math.log(3.0 * W / eps)
    return dim * math.log1p(2.0 * W / eps)


def input_factor(cls: FunctionClassSpec, p) -> float:
    """max{1, d^(1/2 - 1/p)} for Frobenius classes; 1 for (1,inf) classes."""
    r = 2 if cls.norm_kind == FROBENIUS else 1
    return dual_dimension_factor(cls.dims[0], r, parse_exponent(p))


def class_diameter(cls: FunctionClassSpec, B: float, eps: float, p) -> float:
    """D = 2 L^(l-1) * factor * (B + eps) * prod M_j."""
    if B < 0 or eps < 0:
        raise InvalidInput("need B >= 0 and eps >= 0")
    return (2.0 * cls.lipschitz ** (cls.depth - 1) * input_factor(cls, p)
            * (B + eps) * cls.prod_budgets)


def robustified_class_cover_log(cls: FunctionClassSpec, B: float, eps_attack: float, p, cover_eps: float) -> float:
    """sum_j h_j h_{j-1} * log(3 l D / (2 cover_eps)), floored at 0 (one function always suffices)."""
    if not cover_eps > 0:
        raise InvalidInput("cover radius must be positive")
    D = class_diameter(cls, B, eps_attack, p)
    if D == 0:
        return 0.0
    return max(0.0, cls.sum_hh * math.log(3.0 * cls.depth * D / (2.0 * cover_eps)))


def perturbation_radii(cls: FunctionClassSpec, D: float, cover_eps: float) -> tuple:
    """Per-layer radii delta_j = 2 M_j eps / (l D), which make sum_j D delta_j / (2 M_j) = eps."""
    if D == 0:
        return tuple(0.0 for _ in cls.budgets)
    return tuple(2.0 * M * cover_eps / (cls.depth * D) for M in cls.budgets)


def weight_perturbation_gap_check(net: MLP, net_c: MLP, data: Dataset, attack: AttackSpec, deltas,
                                  cls: FunctionClassSpec) -> tuple[float, float]:
    """(max_i |inf y f(x') - inf y f^c(x')|, sum_j D delta_j / (2 M_j)).

    Inner infima come from the grid oracle, so the input dimension is limited
    to 3. Both networks must lie in ``cls`` and their layers must be within
    ``deltas`` of each other.
    """
    deltas = [float(x) for x in deltas]
    if len(deltas) != cls.depth:
        raise InvalidInput("one radius per layer required")
    if data.d > 3:
        raise InvalidInput("the grid oracle is limited to d <= 3")
    if cls.dims[-1] != 1:
        raise InvalidInput("perturbation check needs a single-output class")
    for name, m in (("net", net), ("net_c", net_c)):
        if not cls.contains(m):
            raise InvalidInput(f"{name} violates the class norm budgets")
    for j, (W, Wc, dj) in enumerate(zip(net.weights, net_c.weights, deltas)):
        if matrix_norm(W - Wc, cls.norm_kind) > dj * (1 + 1e-12) + 1e-300:
            raise InvalidInput(f"layer {j + 1} differs by more than delta_{j + 1}")
    grid = AttackSpec(p=attack.p, epsilon=attack.epsilon, solver="grid", resolution=attack.resolution)
    lhs = float(np.abs(robust_values(cls, net, data, grid) - robust_values(cls, net_c, data, grid)).max())
    D = class_diameter(cls, data.B(attack.p), attack.epsilon, attack.p)
    rhs = 0.0
    for dj, M in zip(deltas, cls.budgets):
        if M > 0:
            rhs += D * dj / (2.0 * M)
        elif dj > 0:
            raise InvalidInput("a zero-budget layer admits no perturbation")
    return lhs, rhs


@dataclass(frozen=True)
class ChainResult:
    diameter_D: float
    sum_hh: int
    depth: int
    n: int
    dudley_value: float = 0.0

    def log_cover_at(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=np.float64)
        if self.diameter_D == 0:
            return np.zeros_like(eps)
        return np.maximum(0.0, self.sum_hh * np.log(3.0 * self.depth * self.diameter_D / (2.0 * eps)))


def chain_for_class(cls: FunctionClassSpec, B: float, eps: float, p, n: int) -> ChainResult:
    if n < 1:
        raise InvalidInput("n must be >= 1")
    chain = ChainResult(class_diameter(cls, B, eps, p), cls.sum_hh, cls.depth, n)
    return ChainResult(chain.diameter_D, chain.sum_hh, chain.depth, n, dudley_integral(chain))


def _simpson(f, a: float, b: float, tol: float) -> float:
    """Composite Simpson with panel doubling until the relative change is below tol."""
    if b <= a:
        return 0.0
    panels = 2
    prev = None
    while panels <= SIMPSON_MAX_PANELS:
        x = np.linspace(a, b, panels + 1)
        y = f(x)
        h = (b - a) / panels
        val = h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())
        if prev is not None and abs(val - prev) <= tol * abs(val):
            return float(val)
        prev = val
        panels *= 2
    raise QuadratureError(f"no convergence to {tol} after {SIMPSON_MAX_PANELS} panels")


def unit_integral(l: int, t_lower: float = 0.0, tol: float = 1e-6) -> float:
    """int_{t_lower}^{1/2} sqrt(ln(3l / (2t))) dt by Simpson's rule.

    The substitution t = e^{-s}/2 removes the endpoint singularity at 0.
    """
    if l < 1:
        raise InvalidInput("depth must be >= 1")
    if not 0 <= t_lower < 0.5:
        raise InvalidInput("lower limit must lie in [0, 1/2)")
    c = math.log(3.0 * l)
    s_max = TAIL_CUTOFF if t_lower == 0 else min(TAIL_CUTOFF, math.log(0.5 / t_lower))
    return _simpson(lambda s: 0.5 * np.sqrt(c + s) * np.exp(-s), 0.0, s_max, tol)


def unit_integral_closed_form(l: int) -> float:
    """(1/2) ((3l/2) sqrt(pi) erfc(sqrt(ln 3l)) + sqrt(ln 3l))."""
    r = math.sqrt(math.log(3.0 * l))
    return 0.5 * (1.5 * l * math.sqrt(math.pi) * erfc(r) + r)


def optimal_delta(chain: ChainResult) -> float:
    """Minimizer of 8 delta + (12/sqrt n) int_delta^{D/2} sqrt(log N) for the log-linear cover."""
    D = chain.diameter_D
    if D == 0:
        return 0.0
    delta = 1.5 * chain.depth * D * math.exp(-4.0 * chain.n / (9.0 * chain.sum_hh))
    return min(delta, 0.5 * D)


def dudley_integral(chain: ChainResult, delta_lower: float | str = 0.0, tol: float = 1e-6) -> float:
    """8 delta + (12 / sqrt n) * int_delta^{D/2} sqrt(log N(eps)) d eps.

    ``delta_lower='optimal'`` minimizes over delta in closed form; the default
    delta = 0 is the limit used for the closed-form bound.
    """
    D = chain.diameter_D
    if D == 0:
        return 0.0
    if delta_lower == "optimal":
        delta = optimal_delta(chain)
    else:
        delta = float(delta_lower)
        if not 0 <= delta < D / 2:
            raise InvalidInput("delta must lie in [0, D/2)")
    if delta >= D / 2:
        return 8.0 * delta
    # eps = D t maps [delta, D/2] to [delta/D, 1/2]
    integral = D * math.sqrt(chain.sum_hh) * unit_integral(chain.depth, delta / D, tol)
    return 8.0 * delta + 12.0 / math.sqrt(chain.n) * integral

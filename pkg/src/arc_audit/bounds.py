"""Closed-form complexity bounds and the C/W factor decomposition.

Comparison bounds from other analyses are order-level: they are evaluated
with unit constants and labelled as such in reports.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .covering import input_factor
from .linalg import FROBENIUS, ONE_INF, SPECTRAL, TWO_ONE, InvalidInput, dual_dimension_factor, matrix_norm, parse_exponent
from .network import MLP
from .rademacher import FunctionClassSpec

KHINTCHINE_C = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class LowerBoundConfig:
    khintchine_c: float = KHINTCHINE_C
    r: float | None = None  # defaults to 2 (Frobenius) or 1 ((1,inf)) from the class

    def __post_init__(self):
        if not 0 < self.khintchine_c <= 1:
            raise InvalidInput("Khintchine constant must lie in (0, 1]")


def _check(B, eps, n):
    if B < 0 or eps < 0:
        raise InvalidInput("need B >= 0 and eps >= 0")
    if n < 1:
        raise InvalidInput("n must be >= 1")


def chain_terms(cls: FunctionClassSpec, B: float, eps: float, p) -> float:
    """factor * (B + eps) * L^(l-1) * prod M_j * sqrt(sum h_j h_{j-1} * ln 3l)."""
    return (input_factor(cls, p) * (B + eps) * cls.lipschitz ** (cls.depth - 1) * cls.prod_budgets
            * math.sqrt(cls.sum_hh * math.log(3.0 * cls.depth)))


def thm1_bound(cls: FunctionClassSpec, B: float, eps: float, p, n: int) -> float:
    """Upper bound on the adversarial complexity of a Frobenius-constrained class."""
    _check(B, eps, n)
    if cls.norm_kind != FROBENIUS:
        cls = FunctionClassSpec(cls.dims, FROBENIUS, cls.budgets, cls.activation)
    return 24.0 / math.sqrt(n) * chain_terms(cls, B, eps, p)


def thm2_bound(cls: FunctionClassSpec, B: float, eps: float, p, n: int) -> float:
    """Upper bound for (1,inf)-constrained classes: no input-dimension factor."""
    _check(B, eps, n)
    if cls.norm_kind != ONE_INF:
        cls = FunctionClassSpec(cls.dims, ONE_INF, cls.budgets, cls.activation)
    return 24.0 / math.sqrt(n) * chain_terms(cls, B, eps, p)


def thm3_lower_bound(cls: FunctionClassSpec, B: float, eps: float, p, n: int,
                     cfg: LowerBoundConfig = LowerBoundConfig()) -> float:
    """(c / (1 + 2c)) max{1, d^(1 - 1/r - 1/p)} (B + eps) prod M_j / sqrt(n)."""
    _check(B, eps, n)
    r = cfg.r if cfg.r is not None else (2 if cls.norm_kind == FROBENIUS else 1)
    c = cfg.khintchine_c
    factor = dual_dimension_factor(cls.dims[0], r, parse_exponent(p))
    return c / (1.0 + 2.0 * c) * factor * (B + eps) * cls.prod_budgets / math.sqrt(n)


def thm4_multiclass_bound(cls: FunctionClassSpec, B: float, eps: float, p, n: int, gamma: float,
                          K: int | None = None) -> float:
    """Bound for the adversarial ramp-loss class: (2K / gamma) times the Frobenius bound."""
    K = cls.dims[-1] if K is None else K
    if K < 2:
        raise InvalidInput("multi-class bound needs K >= 2")
    if not gamma > 0:
        raise InvalidInput("gamma must be positive")
    _check(B, eps, n)
    fro = FunctionClassSpec(cls.dims, FROBENIUS, cls.budgets, cls.activation)
    return 48.0 * K / (gamma * math.sqrt(n)) * chain_terms(fro, B, eps, p)


def bartlett_bound(net: MLP, B: float, n: int) -> float:
    """B prod ||W_j||_2 / sqrt(n) * (sum_j (||W_j||_{2,1} / ||W_j||_2)^(2/3))^(3/2)."""
    spec = [matrix_norm(W, SPECTRAL) for W in net.weights]
    if min(spec) == 0:
        return 0.0
    ratios = sum((matrix_norm(W, TWO_ONE) / s) ** (2.0 / 3.0) for W, s in zip(net.weights, spec))
    return B * float(np.prod(spec)) / math.sqrt(n) * ratios ** 1.5


def golowich_form(cls: FunctionClassSpec, B: float, n: int) -> float:
    return B * math.sqrt(cls.depth ** 3 * cls.width) * cls.prod_budgets / math.sqrt(n)


def neyshabur_bound(cls: FunctionClassSpec, B: float, n: int) -> float:
    return B * 2.0 ** cls.depth * cls.lipschitz ** (cls.depth - 1) * cls.prod_budgets / math.sqrt(n)


def awasthi_two_layer(cls: FunctionClassSpec, B: float, eps: float, n: int) -> float:
    if cls.depth != 2:
        raise InvalidInput("the two-layer comparison needs l = 2")
    h1, d = cls.dims[1], cls.dims[0]
    return (B + eps) * math.sqrt(h1 * d) * math.sqrt(math.log(n)) * cls.prod_budgets / math.sqrt(n)


def comparison_bounds(cls: FunctionClassSpec, weights_actual: MLP | None, B: float, eps: float, n: int) -> dict:
    """Order-level comparison values (unit constants). Awasthi's form only for l = 2."""
    _check(B, eps, n)
    out = {"golowich_form": golowich_form(cls, B, n), "neyshabur_exp": neyshabur_bound(cls, B, n)}
    if weights_actual is not None:
        out["bartlett_spectral"] = bartlett_bound(weights_actual, B, n)
    if cls.depth == 2:
        out["awasthi_two_layer"] = awasthi_two_layer(cls, B, eps, n)
    return out


@dataclass(frozen=True)
class Decomposition:
    C: float
    W: float
    product: float
    mode: str
    degenerate: bool = False


def factor_decomposition(B: float, eps: float, l: int, h: int, gamma: float, weight_norm_product: float,
                         mode: str = "std") -> Decomposition:
    """C_std = B sqrt(l), C_adv = (B + eps) h sqrt(l ln l), W = prod ||W_j|| / gamma."""
    if not gamma > 0:
        raise InvalidInput("gamma must be positive")
    if mode not in ("std", "adv"):
        raise InvalidInput(f"mode must be 'std' or 'adv', got {mode!r}")
    degenerate = False
    if mode == "std":
        C = B * math.sqrt(l)
    else:
        ln_l = math.log(l)
        if ln_l < 1e-12:
            ln_l, degenerate = 1e-12, True
        C = (B + eps) * h * math.sqrt(l * ln_l)
    W = weight_norm_product / gamma
    return Decomposition(C, W, C * W, mode, degenerate)


@dataclass
class BoundReport:
    thm1_frobenius: float
    thm2_one_inf: float
    thm3_lower: float
    thm4_multiclass: float | None = None
    comparisons: dict = field(default_factory=dict)
    decomposition: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = {"thm1_frobenius": self.thm1_frobenius, "thm2_one_inf": self.thm2_one_inf,
               "thm3_lower": self.thm3_lower}
        if self.thm4_multiclass is not None:
            out["thm4_multiclass"] = self.thm4_multiclass
        for k, v in self.comparisons.items():
            out[f"{k}_order_level"] = v
        for k, v in self.decomposition.items():
            out[f"decomposition_{k}"] = v
        out["notes"] = list(self.notes)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def bound_report(cls: FunctionClassSpec, B: float, eps: float, p, n: int, *, gamma: float | None = None,
                 multiclass: bool = False, net: MLP | None = None, mode: str = "adv") -> BoundReport:
    """Every applicable bound for one class and data summary."""
    notes = []
    thm4 = None
    if multiclass:
        if gamma is None:
            raise InvalidInput("the multi-class bound needs gamma")
        thm4 = thm4_multiclass_bound(cls, B, eps, p, n, gamma)
    comps = comparison_bounds(cls, net, B, eps, n)
    if cls.depth != 2:
        notes.append("awasthi_two_layer omitted: defined for two-layer networks only")
    if net is None:
        notes.append("bartlett_spectral omitted: needs trained weights")
    notes.append("comparison bounds are order-level with unit constants")
    decomp = {}
    if gamma is not None:
        norm = FROBENIUS if cls.norm_kind == FROBENIUS else ONE_INF
        prod = (float(np.prod([matrix_norm(W, norm) for W in net.weights])) if net is not None
                else cls.prod_budgets)
        dec = factor_decomposition(B, eps, cls.depth, cls.width, gamma, prod, mode)
        decomp = asdict(dec)
        if dec.degenerate:
            notes.append("C_adv degenerate at l = 1 (ln l clamped)")
    return BoundReport(thm1_bound(cls, B, eps, p, n), thm2_bound(cls, B, eps, p, n),
                       thm3_lower_bound(cls, B, eps, p, n), thm4, comps, decomp, notes)

"""Standard and PGD-adversarial SGD training of small MLPs, margin statistics
and the clean/robust generalization-gap table.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .attack import AttackSpec, Objective, inner_min_pgd
from .data import Dataset
from .linalg import FROBENIUS, ONE_INF, InvalidInput, matrix_norm
from .network import MLP, backward_pass, forward_pass, loss_and_output_grad, predict, signed_margins

DEFAULT_SCHEDULE = ((0, 0.1), (100, 0.01), (150, 0.001))


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr_schedule: tuple = DEFAULT_SCHEDULE
    weight_decay: float = 5e-4
    batch_size: int = 32
    adversarial: bool = False
    attack: AttackSpec = AttackSpec()
    seed: int = 0
    loss: str = "cross_entropy"

    def __post_init__(self):
        sched = tuple((int(e), float(lr)) for e, lr in self.lr_schedule)
        object.__setattr__(self, "lr_schedule", sched)
        if self.epochs < 0:
            raise InvalidInput("epochs must be >= 0")
        if not sched or sched[0][0] != 0:
            raise InvalidInput("the learning-rate schedule must start at epoch 0")
        if any(lr < 0 for _, lr in sched):
            raise InvalidInput("learning rates must be >= 0")
        if self.weight_decay < 0 or self.batch_size < 1:
            raise InvalidInput("need weight_decay >= 0 and batch_size >= 1")
        if self.loss not in ("logistic", "cross_entropy"):
            raise InvalidInput(f"unknown training loss {self.loss!r}")

    def lr_at(self, epoch: int) -> float:
        lr = self.lr_schedule[0][1]
        for start, value in self.lr_schedule:
            if epoch >= start:
                lr = value
        return lr

    def to_json(self) -> dict:
        a = self.attack
        return {"epochs": self.epochs, "lr_schedule": [list(x) for x in self.lr_schedule],
                "weight_decay": self.weight_decay, "batch_size": self.batch_size,
                "adversarial": self.adversarial, "seed": self.seed, "loss": self.loss,
                "attack": {"p": "inf" if math.isinf(a.p) else a.p, "epsilon": a.epsilon, "steps": a.steps,
                           "step_size": a.step_size, "restarts": a.restarts}}


def _attack_objective(loss: str, y) -> Objective:
    return Objective.binary(y) if loss == "logistic" else Objective.neg_cross_entropy(y)


def train(net0: MLP, data: Dataset, cfg: TrainConfig, on_epoch=None) -> MLP:
    """Mini-batch SGD with decoupled weight decay: W <- W - lr (grad + wd W).

    The adversarial branch replaces each batch by its PGD attack before the
    gradient step. Shuffling and attack restarts use separate seeded streams,
    so the run is deterministic and an eps = 0 adversarial run is identical
    to the standard run. ``on_epoch(epoch, net)`` is called after each epoch.
    """
    if data.d != net0.dims[0]:
        raise InvalidInput(f"data dimension {data.d} does not match network input {net0.dims[0]}")
    shuffle_rng = np.random.default_rng([cfg.seed, 0])
    attack_rng = np.random.default_rng([cfg.seed, 1])
    W = [w.copy() for w in net0.weights]
    act = net0.activation
    X, y = data.X, data.y
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = shuffle_rng.permutation(data.n)
        for start in range(0, data.n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            if cfg.adversarial and cfg.attack.epsilon > 0:
                current = net0.with_weights(W)
                xb = inner_min_pgd(current, xb, _attack_objective(cfg.loss, yb), cfg.attack, attack_rng).x_star
            out, pre, inputs = forward_pass(W, xb, act)
            loss, d_out = loss_and_output_grad(out, yb, cfg.loss)
            if not np.all(np.isfinite(loss)):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting {start} (lr={lr})")
            grads, _ = backward_pass(W, pre, inputs, d_out / len(idx), act)
            W = [w - lr * (g + cfg.weight_decay * w) for w, g in zip(W, grads)]
        if on_epoch is not None:
            on_epoch(epoch, net0.with_weights(W))
    return net0.with_weights(W)


# -- margins and errors ---------------------------------------------------------

@dataclass(frozen=True)
class MarginStats:
    percentile: float = 5.0
    computed_on: str = "clean"  # or "adversarial"

    def __post_init__(self):
        if not 0 < self.percentile < 100:
            raise InvalidInput("percentile must lie in (0, 100)")
        if self.computed_on not in ("clean", "adversarial"):
            raise InvalidInput("computed_on must be 'clean' or 'adversarial'")


def nearest_rank(values, q: float) -> float:
    """Value at index ceil(q/100 * n) (1-based) of the ascending sort."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise InvalidInput("empty sample")
    k = max(1, math.ceil(q / 100.0 * v.size))
    return float(v[k - 1])


def adversarial_margins(net: MLP, data: Dataset, attack: AttackSpec) -> np.ndarray:
    """Margins at the PGD minimizer of the margin, never above the clean margins."""
    obj = Objective.for_labels(net, data.y)
    return np.asarray(inner_min_pgd(net, data.X, obj, attack,
                                    np.random.default_rng([attack.seed, 2])).value)


def margin_percentile(net: MLP, data: Dataset, stats: MarginStats = MarginStats(),
                      attack: AttackSpec | None = None) -> float:
    if stats.computed_on == "clean":
        m = signed_margins(net, data.X, data.y)
    else:
        if attack is None:
            raise InvalidInput("adversarial margins need an attack")
        m = adversarial_margins(net, data, attack)
    return nearest_rank(m, stats.percentile)


def clean_error(net: MLP, data: Dataset) -> float:
    return float(np.mean(predict(net, data.X) != data.y))


def robust_error(net: MLP, data: Dataset, attack: AttackSpec) -> float:
    """Share of samples misclassified at x or at the PGD point."""
    if attack.epsilon == 0:
        return clean_error(net, data)
    obj = Objective.for_labels(net, data.y)
    res = inner_min_pgd(net, data.X, obj, attack, np.random.default_rng([attack.seed, 2]))
    wrong = (predict(net, res.x_star) != data.y) | (predict(net, data.X) != data.y)
    return float(np.mean(wrong))


@dataclass
class GapTable:
    e_std_std: float
    e_std_rob: float
    e_adv_std: float
    e_adv_rob: float
    train_errors: dict
    test_errors: dict
    degenerate: bool = False

    def to_json(self) -> dict:
        return {"e_std_std": self.e_std_std, "e_std_rob": self.e_std_rob, "e_adv_std": self.e_adv_std,
                "e_adv_rob": self.e_adv_rob, "train_errors": self.train_errors,
                "test_errors": self.test_errors, "degenerate": self.degenerate}


def gap_table(std_net: MLP, adv_net: MLP, train_data: Dataset, test_data: Dataset, attack: AttackSpec) -> GapTable:
    """Clean and robust (evaluation-strength PGD) gaps, test minus train, for both networks.

    ``degenerate`` flags a robust train error of essentially 100%.
    """
    ev = attack.evaluation()
    tr, te = {}, {}
    for name, net in (("std", std_net), ("adv", adv_net)):
        tr[f"{name}_clean"] = clean_error(net, train_data)
        te[f"{name}_clean"] = clean_error(net, test_data)
        tr[f"{name}_robust"] = robust_error(net, train_data, ev)
        te[f"{name}_robust"] = robust_error(net, test_data, ev)
    gap = {k: te[k] - tr[k] for k in tr}
    degenerate = tr["std_robust"] >= 0.99 or tr["adv_robust"] >= 0.99
    return GapTable(gap["std_clean"], gap["std_robust"], gap["adv_clean"], gap["adv_robust"], tr, te, degenerate)


# -- weight-norm traces -----------------------------------------------------------

def norm_product(net: MLP, kind=FROBENIUS) -> float:
    return float(np.prod([matrix_norm(W, kind) for W in net.weights]))


TRACE_COLUMNS = ("epoch", "train_err", "test_err", "robust_train_err", "robust_test_err",
                 "fro_product", "oneinf_product", "margin_p5", "fro_over_margin")


@dataclass
class TraceRecorder:
    """Epoch-end statistics; pass as ``on_epoch`` to :func:`train`.

    Robust errors are evaluated every ``robust_every`` epochs (NaN otherwise)
    because they cost a full PGD pass.
    """

    train_data: Dataset
    test_data: Dataset | None = None
    attack: AttackSpec | None = None
    stats: MarginStats = MarginStats()
    robust_every: int = 0
    rows: list = field(default_factory=list)

    def __call__(self, epoch: int, net: MLP) -> None:
        nan = float("nan")
        test = self.test_data
        robust = (self.attack is not None and self.robust_every > 0
                  and (epoch + 1) % self.robust_every == 0)
        ev = self.attack.evaluation() if self.attack is not None else None
        gamma = margin_percentile(net, self.train_data, self.stats, ev)
        fro = norm_product(net, FROBENIUS)
        self.rows.append({
            "epoch": epoch,
            "train_err": clean_error(net, self.train_data),
            "test_err": clean_error(net, test) if test is not None else nan,
            "robust_train_err": robust_error(net, self.train_data, ev) if robust else nan,
            "robust_test_err": robust_error(net, test, ev) if robust and test is not None else nan,
            "fro_product": fro,
            "oneinf_product": norm_product(net, ONE_INF),
            "margin_p5": gamma,
            "fro_over_margin": fro / gamma if gamma > 0 else float("inf"),
        })

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([r["epoch"]] + [f"{r[c]:.17g}" for c in TRACE_COLUMNS[1:]])


def weight_norm_trace(net0: MLP, data: Dataset, cfg: TrainConfig, stats: MarginStats | None = None,
                      test_data: Dataset | None = None) -> tuple[MLP, list]:
    """Train while recording per-epoch norm products, the margin percentile and their ratio."""
    if stats is None:
        stats = MarginStats(computed_on="adversarial" if cfg.adversarial else "clean")
    rec = TraceRecorder(data, test_data, cfg.attack if cfg.adversarial else None, stats)
    net = train(net0, data, cfg, rec)
    return net, rec.rows


def final_weight_factor(net: MLP, data: Dataset, adversarial: bool, attack: AttackSpec,
                        percentile: float = 5.0) -> tuple[float, float]:
    """(prod ||W_j||_F, gamma) with gamma the margin percentile (adversarial margins for adversarial nets)."""
    stats = MarginStats(percentile, "adversarial" if adversarial else "clean")
    gamma = margin_percentile(net, data, stats, attack.evaluation())
    return norm_product(net, FROBENIUS), gamma


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed, attack=replace(cfg.attack, seed=seed))

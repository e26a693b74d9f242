"""Multi-seed standard vs adversarial training runs on synthetic blobs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .attack import AttackSpec
from .data import Dataset, gaussian_blobs, tradeoff_blobs
from .linalg import InvalidInput
from .network import init_mlp
from .train import (MarginStats, TraceRecorder, TrainConfig, final_weight_factor, gap_table, norm_product,
                    train, with_seed)


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple = tuple(range(10))
    n_train: int = 200
    n_test: int = 5000
    d: int = 10
    data: str = "tradeoff"  # or "blobs"
    separation: float = 4.0  # blobs only
    noise: float = 1.0  # blobs only
    robust_mean: float = 1.5  # tradeoff only, as are the next three
    weak_mean: float = 0.08
    weak_dims: int = 4
    weak_scale: float = 0.1
    hidden: tuple = (128, 128)
    train: TrainConfig = TrainConfig(attack=AttackSpec(epsilon=0.1, restarts=1))
    ablation_weight_decay: tuple = (0.0, 1e-2)
    percentile: float = 5.0
    trace: bool = False

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise InvalidInput("need n_train >= 1 and n_test >= 1")
        if not self.seeds:
            raise InvalidInput("need at least one seed")
        if self.data not in ("tradeoff", "blobs"):
            raise InvalidInput(f"unknown data kind {self.data!r}")


@dataclass
class SeedResult:
    seed: int
    gaps: dict
    w_std: float
    w_adv: float
    gamma_std: float
    gamma_adv: float
    fro_std: float
    fro_adv: float
    ablation_fro: dict
    traces: dict = field(default_factory=dict)


def blob_split(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset]:
    """Train and test splits drawn from the same two blobs (class indices 0/1)."""
    n = cfg.n_train + cfg.n_test
    if cfg.data == "tradeoff":
        data = tradeoff_blobs(n, cfg.d, robust_mean=cfg.robust_mean, weak_mean=cfg.weak_mean,
                              weak_dims=cfg.weak_dims, weak_scale=cfg.weak_scale, seed=seed, signed=False)
    else:
        data = gaussian_blobs(n, cfg.d, 2, separation=cfg.separation, noise=cfg.noise, seed=seed, signed=False)
    idx = np.arange(data.n)
    return data.subset(idx[:cfg.n_train]), data.subset(idx[cfg.n_train:])


def run_seed(cfg: ExperimentConfig, seed: int, train_data: Dataset | None = None,
             test_data: Dataset | None = None) -> SeedResult:
    if train_data is None or test_data is None:
        train_data, test_data = blob_split(cfg, seed)
    K = int(train_data.y.max()) + 1
    head = 1 if cfg.train.loss == "logistic" else max(K, 2)
    net0 = init_mlp([train_data.d, *cfg.hidden, head], np.random.default_rng([seed, 3]))
    tcfg = with_seed(cfg.train, seed)
    attack = tcfg.attack
    traces = {}
    nets = {}
    for name, adversarial in (("std", False), ("adv", True)):
        c = replace(tcfg, adversarial=adversarial)
        rec = None
        if cfg.trace:
            stats = MarginStats(cfg.percentile, "adversarial" if adversarial else "clean")
            rec = TraceRecorder(train_data, test_data, attack, stats)
        nets[name] = train(net0, train_data, c, rec)
        if rec is not None:
            traces[name] = rec.rows
    g = gap_table(nets["std"], nets["adv"], train_data, test_data, attack)
    fro_s, gam_s = final_weight_factor(nets["std"], train_data, False, attack, cfg.percentile)
    fro_a, gam_a = final_weight_factor(nets["adv"], train_data, True, attack, cfg.percentile)
    ablation = {}
    for wd in cfg.ablation_weight_decay:
        ablation[wd] = norm_product(train(net0, train_data, replace(tcfg, weight_decay=wd)))
    return SeedResult(seed, g.to_json(), _ratio(fro_s, gam_s), _ratio(fro_a, gam_a), gam_s, gam_a,
                      fro_s, fro_a, ablation, traces)


def _ratio(num: float, gamma: float) -> float:
    return num / gamma if gamma > 0 else math.inf


@dataclass
class ExperimentSummary:
    results: list
    medians: dict

    @property
    def orderings(self) -> dict:
        m = self.medians
        wds = sorted(k for k in m if k.startswith("fro_wd_"))
        out = {"w_adv_gt_w_std": m["w_adv"] > m["w_std"],
               "rob_adv_gt_clean_adv": m["e_adv_rob"] > m["e_adv_std"],
               "clean_adv_gt_clean_std": m["e_adv_std"] > m["e_std_std"]}
        if len(wds) >= 2:
            vals = [(float(k[len("fro_wd_"):]), m[k]) for k in wds]
            vals.sort()
            out["weight_decay_shrinks_fro"] = vals[-1][1] < vals[0][1]
        return out

    def to_json(self) -> dict:
        return {"medians": self.medians, "orderings": self.orderings,
                "per_seed": [{"seed": r.seed, "gaps": r.gaps, "w_std": r.w_std, "w_adv": r.w_adv,
                              "gamma_std": r.gamma_std, "gamma_adv": r.gamma_adv,
                              "fro_std": r.fro_std, "fro_adv": r.fro_adv,
                              "ablation_fro": {repr(k): v for k, v in r.ablation_fro.items()}}
                             for r in self.results]}


def summarize(results: list) -> ExperimentSummary:
    med = {}
    for key in ("e_std_std", "e_std_rob", "e_adv_std", "e_adv_rob"):
        med[key] = float(np.median([r.gaps[key] for r in results]))
    for key in ("w_std", "w_adv", "fro_std", "fro_adv", "gamma_std", "gamma_adv"):
        med[key] = float(np.median([getattr(r, key) for r in results]))
    for wd in results[0].ablation_fro:
        med[f"fro_wd_{wd!r}"] = float(np.median([r.ablation_fro[wd] for r in results]))
    return ExperimentSummary(results, med)


def run_experiment(cfg: ExperimentConfig, train_data: Dataset | None = None,
                   test_data: Dataset | None = None) -> ExperimentSummary:
    """Every seed trains standard, adversarial and weight-decay-ablation networks from one init."""
    return summarize([run_seed(cfg, s, train_data, test_data) for s in cfg.seeds])


def plot_data(results: list, path) -> None:
    """Whitespace-separated columns, one row per epoch: mean over seeds of each traced series."""
    series = []
    for name in ("std", "adv"):
        if not all(name in r.traces for r in results):
            continue
        for col in ("fro_product", "oneinf_product", "margin_p5", "fro_over_margin", "train_err", "test_err"):
            vals = np.array([[row[col] for row in r.traces[name]] for r in results])
            series.append((f"{name}_{col}", vals.mean(axis=0)))
    if not series:
        raise InvalidInput("no traces recorded; enable tracing")
    epochs = len(series[0][1])
    with open(path, "w") as fh:
        fh.write("# epoch " + " ".join(n for n, _ in series) + "\n")
        for e in range(epochs):
            fh.write(" ".join([str(e)] + [f"{v[e]:.17g}" for _, v in series]) + "\n")

"""Desk-scale standard vs adversarial training on two-class synthetic data.

Prints per-seed and median generalization gaps, weight-norm-over-margin
factors and the weight-decay ablation, then writes the JSON summary (and,
with --trace, per-epoch plot data) to --out.

    python scripts/reproduce_gaps.py --seeds 10 --out runs/gaps
"""
import argparse
import json
import os
import time
from dataclasses import replace

from arc_audit.attack import AttackSpec
from arc_audit.experiment import ExperimentConfig, plot_data, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--data", choices=["tradeoff", "blobs"], default="tradeoff")
    ap.add_argument("--trace", action="store_true")
    ap.add_argument("--out", default="runs/gaps")
    args = ap.parse_args()

    base = ExperimentConfig()
    train = replace(base.train, epochs=args.epochs, attack=AttackSpec(epsilon=args.epsilon, restarts=1))
    cfg = replace(base, seeds=tuple(range(args.seeds)), data=args.data, train=train, trace=args.trace)
    started = time.time()
    summary = run_experiment(cfg)

    print(f"{'seed':>4} {'E_std':>7} {'E~_std':>7} {'E_adv':>7} {'E~_adv':>7} {'W_std':>8} {'W_adv':>8}")
    for r in summary.results:
        g = r.gaps
        print(f"{r.seed:>4} {g['e_std_std']:7.4f} {g['e_std_rob']:7.4f} {g['e_adv_std']:7.4f} "
              f"{g['e_adv_rob']:7.4f} {r.w_std:8.1f} {r.w_adv:8.1f}")
    m = summary.medians
    print(f" med {m['e_std_std']:7.4f} {m['e_std_rob']:7.4f} {m['e_adv_std']:7.4f} {m['e_adv_rob']:7.4f} "
          f"{m['w_std']:8.1f} {m['w_adv']:8.1f}")
    for k, v in summary.orderings.items():
        print(f"{k}: {v}")
    print(f"{time.time() - started:.0f}s")

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary.to_json(), fh, indent=2)
    if args.trace:
        plot_data(summary.results, os.path.join(args.out, "plot_data.dat"))


if __name__ == "__main__":
    main()

"""Monte-Carlo ARC estimates against the closed-form upper bound.

Draws random tiny classes, estimates adversarial Rademacher complexity with
the grid inner oracle and reports estimate, Frobenius upper bound and their ratio.

    python scripts/bound_sweep.py --classes 10 --draws 500
"""
import argparse
import math

import numpy as np

from arc_audit.attack import AttackSpec
from arc_audit.bounds import thm1_bound
from arc_audit.data import gaussian_blobs
from arc_audit.rademacher import FunctionClassSpec, SupBudget, estimate_arc

RESOLUTION = {1: 101, 2: 31, 3: 11}


def random_class(rng):
    l = int(rng.integers(1, 4))
    d = int(rng.integers(1, 4))
    dims = (d,) + tuple(int(h) for h in rng.integers(1, 5, l - 1)) + (1,)
    return FunctionClassSpec(dims, budgets=tuple(float(m) for m in rng.uniform(0.5, 2.0, l)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--draws", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    budget = SupBudget(1, 10, 200)

    print(f"{'dims':<14} {'n':>3} {'eps':>4} {'p':>3} {'arc':>8} {'+-':>7} {'thm1':>8} {'ratio':>7}")
    for _ in range(args.classes):
        cls = random_class(rng)
        d = cls.dims[0]
        n = int(rng.integers(2, 21))
        eps = float(rng.choice([0.0, 0.1, 0.3]))
        p = 2 if rng.uniform() < 0.5 else math.inf
        data = gaussian_blobs(n, d, B=1.0, p=p, seed=int(rng.integers(1 << 30)))
        atk = AttackSpec(p=p, epsilon=eps, solver="grid", resolution=RESOLUTION[d])
        est = estimate_arc(cls, data, atk, draws=args.draws, budget=budget, seed=args.seed)
        upper = thm1_bound(cls, 1.0, eps, p, n)
        print(f"{str(cls.dims):<14} {n:>3} {eps:>4} {str(p):>3} {est.mean:8.4f} {est.stderr:7.4f} "
              f"{upper:8.3f} {est.mean / upper:7.4f}")


if __name__ == "__main__":
    main()

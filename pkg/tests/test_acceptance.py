"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary (see conftest.py) and when the
module is run directly with ``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest
from dataclasses import replace

from arc_audit.attack import AttackSpec, Objective, inner_min_linear, inner_min_pgd
from arc_audit.bounds import thm1_bound, thm2_bound, thm3_lower_bound
from arc_audit.covering import (ball_cover_count, chain_for_class, class_diameter, perturbation_radii,
                                unit_integral, unit_integral_closed_form, weight_perturbation_gap_check)
from arc_audit.data import equal_entries_dataset, gaussian_blobs
from arc_audit.experiment import ExperimentConfig, run_experiment
from arc_audit.linalg import (FROBENIUS, INF, ONE_INF, dual_exponent, dual_dimension_factor, matrix_norm,
                              matvec_norm_bound_check, p_norm_rows, vector_p_norm)
from arc_audit.network import IDENTITY, MLP, forward_pass, grad_weights, init_mlp, loss_value, ramp_loss
from arc_audit.rademacher import FunctionClassSpec, SupBudget, estimate_arc, estimate_rc
from arc_audit.train import TrainConfig, train

pytestmark = pytest.mark.acceptance

RESULTS = {}
TITLES = {
    1: "bound dominance sweep",
    2: "lower-bound attainment",
    3: "linear exactness",
    4: "robustified weight perturbation",
    5: "Dudley consistency",
    6: "gradient correctness",
    7: "degenerate-eps identity",
    8: "directional reproduction",
    9: "ramp sandwich and Lipschitz",
    10: "norm lemmas",
}

# sup search used for the sweeps; the bounds sit more than 30x above the estimates
SWEEP_BUDGET = SupBudget(restarts=1, steps=10, random_samples=200)
GRID_RESOLUTION = {1: 101, 2: 31, 3: 11}
REL = 1e-12


def record(k, ok, detail):
    RESULTS[k] = (bool(ok), detail)
    line = f"CRITERION {k:2d} [{TITLES[k]}]: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    return line


def random_class(rng, norm_kind=None):
    l = int(rng.integers(1, 4))
    d = int(rng.integers(1, 4))
    dims = (d,) + tuple(int(rng.integers(1, 5)) for _ in range(l - 1)) + (1,)
    budgets = tuple(rng.uniform(0.5, 2.0, l))
    kind = norm_kind if norm_kind is not None else (FROBENIUS if rng.uniform() < 0.5 else ONE_INF)
    return FunctionClassSpec(dims, kind, budgets)


def test_criterion_1_bound_dominance():
    rng = np.random.default_rng(101)
    worst, failures, started = 0.0, [], time.time()
    for k in range(50):
        cls = random_class(rng)
        n = int(rng.integers(2, 21))
        eps = float(rng.choice([0.0, 0.1, 0.3]))
        p = float(rng.choice([2.0, INF]))
        data = gaussian_blobs(n, cls.dims[0], B=1.0, p=p, seed=1000 + k)
        atk = AttackSpec(p=p, epsilon=eps, solver="grid", resolution=GRID_RESOLUTION[cls.dims[0]])
        est = estimate_arc(cls, data, atk, draws=2000, budget=SWEEP_BUDGET, seed=k)
        upper = est.mean + 3 * est.stderr
        B = data.B(p)
        bounds = {"thm1": thm1_bound(cls, B, eps, p, n)}
        if cls.norm_kind == ONE_INF:
            bounds["thm2"] = thm2_bound(cls, B, eps, p, n)
        for name, b in bounds.items():
            worst = max(worst, upper / b)
            if upper > b:
                failures.append((k, name, upper, b))
    ok = not failures
    record(1, ok, f"50 classes, 2000 draws each, max (mean+3se)/bound = {worst:.4f}, "
                  f"{len(failures)} violations, {time.time() - started:.0f}s")
    assert ok, failures


def test_criterion_2_lower_bound_attainment():
    cases = [((2, 1), FROBENIUS, 2.0), ((3, 1), FROBENIUS, INF), ((2, 1), ONE_INF, INF), ((2, 3, 1), FROBENIUS, 2.0),
             ((1, 2, 1), FROBENIUS, 2.0)]
    rows, ok = [], True
    for j, (dims, kind, p) in enumerate(cases):
        cls = FunctionClassSpec(dims, kind, tuple(1.0 for _ in dims[1:]))
        n, eps = 10, 0.1
        data = equal_entries_dataset(n, dims[0], 1.0, p=p, seed=j)
        atk = AttackSpec(p=p, epsilon=eps, solver="grid", resolution=GRID_RESOLUTION[dims[0]])
        est = estimate_arc(cls, data, atk, draws=2000, budget=SupBudget(restarts=3, steps=40, random_samples=300),
                           seed=j)
        lower = thm3_lower_bound(cls, data.B(p), eps, p, n)
        rows.append(f"{dims}:{est.mean + 3 * est.stderr:.3f}>={lower:.3f}")
        ok &= est.mean + 3 * est.stderr >= lower
    record(2, ok, "; ".join(rows))
    assert ok


def test_criterion_3_linear_exactness():
    rng = np.random.default_rng(303)
    worst_exact = 0.0
    for _ in range(10_000):
        d = int(rng.integers(1, 8))
        w, x = rng.standard_normal(d), rng.uniform(-1, 1, d)
        y, eps = float(rng.choice([-1.0, 1.0])), float(rng.uniform(0, 1))
        p = float(rng.choice([1.0, 2.0, INF]))
        expected = y * w @ x - eps * vector_p_norm(w, dual_exponent(p))
        got = inner_min_linear(w, x, y, p, eps).value
        worst_exact = max(worst_exact, abs(got - expected) / max(abs(expected), 1e-300))
    worst_pgd = 0.0
    for _ in range(2_000):
        d = int(rng.integers(1, 6))
        w, x = rng.uniform(-1, 1, d), rng.uniform(-1, 1, d)
        y, eps = float(rng.choice([-1.0, 1.0])), float(rng.uniform(0, 0.5))
        p = float(rng.choice([2.0, INF]))
        net = MLP((w[None, :],), IDENTITY)
        res = inner_min_pgd(net, x, Objective.binary(y), AttackSpec(p=p, epsilon=eps), np.random.default_rng(0))
        worst_pgd = max(worst_pgd, abs(float(np.asarray(res.value).ravel()[0])
                                       - inner_min_linear(w, x, y, p, eps).value))
    ok = worst_exact <= 1e-12 and worst_pgd <= 1e-3
    record(3, ok, f"10^4 exact cases max rel err {worst_exact:.2e}; 2000 PGD cases max abs err {worst_pgd:.2e}")
    assert ok


def test_criterion_4_weight_perturbation():
    rng = np.random.default_rng(404)
    violations, worst = 0, 0.0
    for k in range(500):
        d = int(rng.integers(1, 3))
        l = int(rng.integers(1, 4))
        dims = (d,) + tuple(int(rng.integers(1, 5)) for _ in range(l - 1)) + (1,)
        kind = FROBENIUS if rng.uniform() < 0.5 else ONE_INF
        cls = FunctionClassSpec(dims, kind, tuple(rng.uniform(0.5, 2.0, l)))
        W = [w[1] for w in cls.sample(rng, 2, boundary_fraction=float(rng.uniform() < 0.5))]
        p = float(rng.choice([2.0, INF]))
        eps = float(rng.choice([0.0, 0.1, 0.3]))
        data = gaussian_blobs(int(rng.integers(1, 6)), d, B=1.0, p=p, seed=k)
        D = class_diameter(cls, data.B(p), eps, p)
        radii = perturbation_radii(cls, D, float(rng.uniform(0.01, 1.0)))
        Wc = []
        for w, r in zip(W, radii):
            u = rng.standard_normal(w.shape)
            Wc.append(w + r * rng.uniform() * u / matrix_norm(u, kind))
        Wc = cls.project(Wc)
        deltas = [matrix_norm(a - b, kind) * (1 + 1e-12) for a, b in zip(W, Wc)]
        lhs, rhs = weight_perturbation_gap_check(MLP(tuple(W), cls.activation), MLP(tuple(Wc), cls.activation),
                                                 data, AttackSpec(p=p, epsilon=eps, resolution=401), deltas, cls)
        if rhs > 0:
            worst = max(worst, lhs / rhs)
        violations += lhs > rhs * (1 + REL) + 1e-15
    ok = violations == 0
    record(4, ok, f"500 pairs at grid resolution 401, {violations} violations, max lhs/rhs = {worst:.4f}")
    assert ok


def test_criterion_5_dudley_consistency():
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(20):
        cls = random_class(rng, FROBENIUS)
        B, eps = float(rng.uniform(0.5, 3)), float(rng.choice([0.0, 0.1, 0.3]))
        p, n = float(rng.choice([2.0, INF])), int(rng.integers(1, 10_000))
        worst = max(worst, chain_for_class(cls, B, eps, p, n).dudley_value / thm1_bound(cls, B, eps, p, n))
    worst_int, above = 0.0, 0
    for l in range(1, 21):
        num, closed = unit_integral(l), unit_integral_closed_form(l)
        worst_int = max(worst_int, abs(num - closed) / closed)
        above += num > math.sqrt(math.log(3 * l))
    ok = worst <= 1 + 1e-9 and worst_int <= 1e-6 and above == 0
    record(5, ok, f"max dudley/thm1 = {worst:.6f}; unit integral max rel err {worst_int:.1e}, {above} above sqrt(ln 3l)")
    assert ok


def test_criterion_6_gradients():
    rng = np.random.default_rng(606)
    worst, checked = 0.0, 0
    while checked < 1000:
        head = int(rng.choice([1, 3]))
        dims = [3] + [int(rng.integers(2, 5)) for _ in range(int(rng.integers(0, 3)))] + [head]
        net = init_mlp(dims, rng)
        x = rng.standard_normal((1, 3))
        _, pre, _ = forward_pass(net.weights, x, net.activation)
        if any(np.min(np.abs(z)) < 1e-3 for z in pre[:-1]):
            continue
        loss = "logistic" if head == 1 else "cross_entropy"
        y = np.array([rng.choice([-1, 1])]) if head == 1 else np.array([rng.integers(0, head)])
        grads = grad_weights(net, x, y, loss)
        g_all, fd_all = [], []
        for j, W in enumerate(net.weights):
            for idx in np.ndindex(W.shape):
                ws = [w.copy() for w in net.weights]
                ws[j][idx] += 1e-6
                up = loss_value(net.with_weights(ws), x, y, loss)
                ws[j][idx] -= 2e-6
                dn = loss_value(net.with_weights(ws), x, y, loss)
                fd_all.append((up - dn) / 2e-6)
                g_all.append(grads[j][idx])
        g_all, fd_all = np.array(g_all), np.array(fd_all)
        worst = max(worst, np.linalg.norm(g_all - fd_all) / max(np.linalg.norm(fd_all), 1e-8))
        checked += 1
    ok = worst < 1e-5
    record(6, ok, f"1000 kink-free points, max relative error {worst:.2e}")
    assert ok


def test_criterion_7_degenerate_eps():
    rng = np.random.default_rng(707)
    same = True
    for k in range(5):
        cls = random_class(rng)
        data = gaussian_blobs(8, cls.dims[0], B=1.0, seed=k)
        rc = estimate_rc(cls, data, draws=50, budget=SWEEP_BUDGET, seed=k)
        for solver in ("grid", "pgd"):
            arc = estimate_arc(cls, data, AttackSpec(p=2, epsilon=0.0, solver=solver), draws=50,
                               budget=SWEEP_BUDGET, seed=k)
            same &= np.array_equal(rc.sup_values, arc.sup_values) and rc.mean == arc.mean
    data = gaussian_blobs(64, 3, seed=7, signed=False)
    net0 = init_mlp([3, 8, 2], rng)
    cfg = TrainConfig(epochs=10, attack=AttackSpec(epsilon=0.0))
    a, b = train(net0, data, cfg), train(net0, data, replace(cfg, adversarial=True))
    same_train = all(np.array_equal(u, v) for u, v in zip(a.weights, b.weights))
    ok = same and same_train
    record(7, ok, f"estimators bit-identical: {same}; adversarial training bit-identical: {same_train}")
    assert ok


def test_criterion_8_directional_reproduction():
    started = time.time()
    summary = run_experiment(ExperimentConfig())
    o, m = summary.orderings, summary.medians
    ok = (o["w_adv_gt_w_std"] and o["rob_adv_gt_clean_adv"] and o["clean_adv_gt_clean_std"]
          and o["weight_decay_shrinks_fro"])
    record(8, ok, f"W_adv {m['w_adv']:.1f} vs W_std {m['w_std']:.1f}; gaps rob_adv {m['e_adv_rob']:.4f}, "
                  f"clean_adv {m['e_adv_std']:.4f}, clean_std {m['e_std_std']:.4f}; "
                  f"fro wd=0.01 {m['fro_wd_0.01']:.1f} vs wd=0 {m['fro_wd_0.0']:.1f}; {time.time() - started:.0f}s")
    assert ok, o


def test_criterion_9_ramp():
    rng = np.random.default_rng(909)
    t1, t2 = rng.uniform(-5, 5, 10_000), rng.uniform(-5, 5, 10_000)
    gamma = rng.uniform(0.01, 5, 10_000)
    phi1 = np.array([ramp_loss(t, g) for t, g in zip(t1, gamma)])
    phi2 = np.array([ramp_loss(t, g) for t, g in zip(t2, gamma)])
    sandwich = np.sum((phi1 < (t1 <= 0)) | (phi1 > (t1 <= gamma)))
    lipschitz = np.sum(np.abs(phi1 - phi2) > np.abs(t1 - t2) / gamma * (1 + REL))
    ok = sandwich == 0 and lipschitz == 0
    record(9, ok, f"10^4 instances, {sandwich} sandwich and {lipschitz} Lipschitz violations")
    assert ok


def _greedy_separated(points, eps, p):
    centres = []
    for x in points:
        if not centres or p_norm_rows(np.array(centres) - x, p).min() > eps:
            centres.append(x)
    return len(centres)


def test_criterion_10_norm_lemmas():
    rng = np.random.default_rng(1010)
    viol = {"A.1": 0, "A.2": 0, "A.3": 0, "A.4": 0}
    for _ in range(10_000):
        # A.1: an eps-separated subset of a radius-W ball never exceeds (1 + 2W/eps)^d points
        d, p = int(rng.integers(1, 3)), float(rng.choice([1.0, 2.0, INF]))
        W, eps = float(rng.uniform(0.1, 2)), float(rng.uniform(0.2, 2))
        g = rng.standard_normal((60, d))
        pts = g / p_norm_rows(g, p)[:, None] * W * rng.uniform(0, 1, (60, 1)) ** (1 / d)
        viol["A.1"] += _greedy_separated(pts, eps, p) > math.exp(ball_cover_count(W, eps, d)) * (1 + REL)
        # A.2: perturbed points obey the dual-norm bound
        d, p, r = int(rng.integers(1, 6)), float(rng.choice([1.0, 1.5, 2.0, 3.0, INF])), float(rng.choice([1.0, 2.0]))
        X = rng.standard_normal((3, d))
        if rng.uniform() < 0.2:
            X = np.full((3, d), rng.uniform(-1, 1))
        eps = float(rng.uniform(0, 1))
        u = rng.standard_normal(d)
        x_star = X[0] + eps * u / vector_p_norm(u, p)
        lhs = vector_p_norm(x_star, dual_exponent(r))
        rhs = dual_dimension_factor(d, r, p) * (p_norm_rows(X, p).max() + eps)
        viol["A.2"] += lhs > rhs * (1 + REL)
        # A.3 and A.4
        m, k = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        A, b = rng.standard_normal((m, k)) * rng.uniform(0, 3), rng.standard_normal(k)
        lhs, rhs = matvec_norm_bound_check(A, b, FROBENIUS)
        viol["A.3"] += lhs > rhs * (1 + REL)
        lhs, rhs = matvec_norm_bound_check(A, b, ONE_INF)
        viol["A.4"] += lhs > rhs * (1 + REL)
    ok = not any(viol.values())
    record(10, ok, "10^4 instances per lemma, violations " + ", ".join(f"{k}={v}" for k, v in viol.items()))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

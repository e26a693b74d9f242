import csv
import math

import numpy as np
import pytest

from arc_audit.attack import AttackSpec
from arc_audit.data import Dataset, gaussian_blobs
from arc_audit.linalg import ONE_INF, InvalidInput
from arc_audit.network import init_mlp
from arc_audit.rademacher import (FunctionClassSpec, GenBoundInput, SupBudget, estimate_arc, estimate_arc_multiclass,
                                  estimate_rc, gen_bound_rhs, _sigmas, robust_values)

SMALL = SupBudget(restarts=3, steps=30, random_samples=100)
LINEAR = FunctionClassSpec((1, 1), budgets=(1.0,))


def one_point(x=1.0, y=1):
    return Dataset(np.array([[x]]), np.array([y]))


def test_single_sample_rc_is_one():
    est = estimate_rc(LINEAR, one_point(), draws=20, budget=SMALL)
    np.testing.assert_allclose(est.sup_values, 1.0, rtol=0, atol=1e-12)


def test_zero_budgets_give_zero():
    cls = FunctionClassSpec((2, 3, 1), budgets=(0.0, 1.0))
    est = estimate_rc(cls, gaussian_blobs(6, 2, seed=0), draws=10, budget=SMALL)
    assert est.mean == 0 and np.all(est.sup_values == 0)


def test_two_identical_points_enumeration():
    data = Dataset(np.ones((2, 1)), np.array([1, 1]))
    est = estimate_rc(LINEAR, data, draws=64, budget=SMALL)
    sig = _sigmas(0, 64, 2)
    np.testing.assert_allclose(est.sup_values, np.abs(sig.sum(axis=1)) / 2, atol=1e-12)


@pytest.mark.parametrize("eps,plus,minus", [(0.5, 0.5, 1.5), (2.0, 0.0, 3.0)])
def test_one_dimensional_arc(eps, plus, minus):
    # sigma = +1: sup_w min_{x'} w x'; sigma = -1: sup_w -min_{x'} w x' over x' in [1 - eps, 1 + eps]
    est = estimate_arc(LINEAR, one_point(), AttackSpec(p="inf", epsilon=eps, solver="grid"), draws=40, budget=SMALL)
    sig = _sigmas(0, 40, 1)[:, 0]
    np.testing.assert_allclose(est.sup_values, np.where(sig > 0, plus, minus), atol=1e-12)


def test_eps_zero_is_rc_bit_exact():
    data = gaussian_blobs(8, 2, B=1.0, seed=1)
    cls = FunctionClassSpec((2, 3, 1), budgets=(1.0, 1.5))
    rc = estimate_rc(cls, data, draws=30, budget=SMALL, seed=4)
    for solver in ("grid", "pgd"):
        arc = estimate_arc(cls, data, AttackSpec(p=2, epsilon=0.0, solver=solver), draws=30, budget=SMALL, seed=4)
        assert np.array_equal(rc.sup_values, arc.sup_values)
        assert rc.mean == arc.mean and rc.stderr == arc.stderr


def test_deterministic_and_thread_independent():
    data = gaussian_blobs(6, 2, B=1.0, seed=2)
    cls = FunctionClassSpec((2, 2, 1), budgets=(1.0, 1.0))
    atk = AttackSpec(p=2, epsilon=0.1, solver="grid", resolution=21)
    a = estimate_arc(cls, data, atk, draws=25, budget=SMALL, seed=9)
    b = estimate_arc(cls, data, atk, draws=25, budget=SMALL, seed=9)
    c = estimate_arc(cls, data, atk, draws=25, budget=SMALL, seed=9, threads=3)
    assert np.array_equal(a.sup_values, b.sup_values) and np.array_equal(a.sup_values, c.sup_values)
    assert a.sigma_hashes == c.sigma_hashes


def test_arc_at_least_rc():
    data = gaussian_blobs(10, 2, B=1.0, seed=3)
    cls = FunctionClassSpec((2, 3, 1), budgets=(1.0, 1.0))
    rc = estimate_rc(cls, data, draws=100, budget=SMALL, seed=1)
    arc = estimate_arc(cls, data, AttackSpec(p=2, epsilon=0.3, solver="grid", resolution=31), draws=100,
                       budget=SMALL, seed=1)
    assert arc.mean >= rc.mean - 3 * math.hypot(rc.stderr, arc.stderr)


def test_ramp_contraction():
    data = gaussian_blobs(10, 2, B=1.0, seed=4)
    cls = FunctionClassSpec((2, 3, 1), budgets=(1.0, 1.0))
    rc = estimate_rc(cls, data, draws=100, budget=SMALL, seed=2)
    ramp = estimate_rc(cls, data, draws=100, budget=SMALL, seed=2, gamma=1.0)
    assert ramp.mean <= rc.mean + 3 * math.hypot(rc.stderr, ramp.stderr)


def test_inner_inf_non_increasing_in_eps():
    rng = np.random.default_rng(5)
    data = gaussian_blobs(8, 2, B=1.0, seed=5)
    cls = FunctionClassSpec((2, 4, 1), budgets=(1.0, 1.0))
    net = init_mlp([2, 4, 1], rng)
    vals = [robust_values(cls, net, data, AttackSpec(p=2, epsilon=e, solver="grid", resolution=101))
            for e in (0.0, 0.05, 0.1, 0.2)]
    for a, b in zip(vals, vals[1:]):
        assert np.all(b <= a + 1e-15)


def test_multiclass_zero_budget_is_sign_average():
    data = gaussian_blobs(4, 2, K=3, seed=6)
    cls = FunctionClassSpec((2, 3, 3), budgets=(1.0, 0.0))
    est = estimate_arc_multiclass(cls, data, AttackSpec(p=2, epsilon=0.1, solver="grid", resolution=11), 1.0,
                                  draws=16, budget=SMALL)
    np.testing.assert_array_equal(est.sup_values, _sigmas(0, 16, 4).sum(axis=1) / 4)


def test_multiclass_gamma_scaling():
    # once phi_gamma(0) = 1 is removed, the supremum scales as 1/gamma while margins stay below gamma
    data = gaussian_blobs(8, 2, K=3, B=1.0, seed=2)
    cls = FunctionClassSpec((2, 3, 3), budgets=(1.0, 1.0))
    atk = AttackSpec(p=2, epsilon=0.1, solver="grid", resolution=11)
    centred = []
    for gamma in (10.0, 20.0):
        est = estimate_arc_multiclass(cls, data, atk, gamma, draws=60, budget=SMALL)
        centred.append(np.mean(est.sup_values - _sigmas(0, 60, 8).mean(axis=1)))
    assert centred[0] / centred[1] == pytest.approx(2.0, rel=1e-6)


def test_two_class_matches_ramp_binary():
    # f_0 - f_1 ranges over the binary class with last-layer budget sqrt(2) M_2
    db = gaussian_blobs(10, 2, B=1.0, seed=3)
    dk = Dataset(db.X, np.where(db.y == 1, 0, 1))
    budget = SupBudget(5, 60, 200)
    multi = estimate_arc_multiclass(FunctionClassSpec((2, 3, 2), budgets=(1.0, 1.0)), dk, None, 0.5,
                                    draws=100, budget=budget)
    binary = estimate_rc(FunctionClassSpec((2, 3, 1), budgets=(1.0, math.sqrt(2))), db, draws=100,
                         budget=budget, gamma=0.5)
    assert abs(multi.mean - binary.mean) <= 3 * math.hypot(multi.stderr, binary.stderr)


def test_pgd_inner_solver_for_larger_d():
    data = gaussian_blobs(6, 4, B=1.0, seed=7)
    cls = FunctionClassSpec((4, 2, 1), ONE_INF, budgets=(1.0, 1.0))
    est = estimate_arc(cls, data, AttackSpec(p="inf", epsilon=0.1, solver="grid", steps=5, restarts=2),
                       draws=10, budget=SupBudget(2, 5, 20))
    assert est.config["attack"]["solver"] == "pgd"
    assert est.mean > 0


def test_trace_and_low_confidence(tmp_path):
    est = estimate_rc(LINEAR, one_point(), draws=1, budget=SMALL)
    assert est.stderr == 0 and est.low_confidence
    est = estimate_rc(LINEAR, one_point(), draws=5, budget=SMALL)
    path = tmp_path / "trace.csv"
    est.write_trace(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["draw_index", "sigma_pattern_hash", "sup_value"]
    assert len(rows) == 6 and float(rows[3][2]) == est.sup_values[2]


def test_guards():
    with pytest.raises(InvalidInput):
        FunctionClassSpec((2, 3, 1), budgets=(1.0,))
    with pytest.raises(InvalidInput):
        estimate_rc(LINEAR, Dataset(np.ones((2, 1)), np.array([0, 1])), draws=2)
    with pytest.raises(InvalidInput):
        estimate_rc(FunctionClassSpec((2, 1), budgets=(1.0,)), one_point(), draws=2)
    with pytest.raises(InvalidInput):
        estimate_arc_multiclass(FunctionClassSpec((1, 2), budgets=(1.0,)), Dataset(np.ones((1, 1)), np.array([0])),
                                None, 0.0)


def test_gen_bound_rhs():
    assert gen_bound_rhs(GenBoundInput(0.1, 0.2, 1.0, 0.05, 100)) == pytest.approx(
        0.5 + 3 * math.sqrt(math.log(40) / 200), rel=1e-15)
    assert gen_bound_rhs(GenBoundInput(0.1, 0.2, 1.0, 0.05, 100)) == pytest.approx(0.9074, abs=5e-5)
    assert gen_bound_rhs(GenBoundInput(0.0, 0.0, 2.0, 0.999999, 50)) == pytest.approx(
        6 * math.sqrt(math.log(2 / 0.999999) / 100))
    assert gen_bound_rhs(GenBoundInput(0.1, 0.2, 1.0, 0.05, 10 ** 12)) == pytest.approx(0.5, abs=1e-5)
    with pytest.raises(InvalidInput):
        GenBoundInput(0.1, 0.2, 1.0, 1.0, 10)

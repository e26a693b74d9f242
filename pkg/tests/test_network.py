import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arc_audit.linalg import InvalidInput
from arc_audit.network import (IDENTITY, RELU, MLP, ActivationSpec, forward, forward_pass, grad_input, grad_weights,
                               init_mlp, loss_value, margin, margin_values, predict, ramp_loss)


def relu_net(*weights):
    return MLP(tuple(np.asarray(w, dtype=np.float64) for w in weights), RELU)


def kink_free(net, x, tol=1e-4):
    _, pre, _ = forward_pass(net.weights, np.atleast_2d(x), net.activation)
    return all(np.all(np.abs(z) >= tol) for z in pre)


def test_forward_examples():
    assert forward(relu_net([[2, 0]]), [1, 1]).tolist() == [2]
    assert forward(relu_net([[1], [-1]], [[1, 1]]), [1]).tolist() == [1]
    net = init_mlp([3, 4, 2], np.random.default_rng(0))
    assert np.array_equal(forward(net, np.zeros(3)), np.zeros(2))
    with pytest.raises(InvalidInput):
        forward(net, np.zeros(2))


def test_grad_input_examples():
    assert grad_input(relu_net([[2, -3]]), [0.3, 0.7], 0).tolist() == [2, -3]
    assert grad_input(relu_net([[1], [-1]], [[1, 1]]), [1.0], 0).tolist() == [1]
    # rho'(0) = 0 at the kink
    assert grad_input(relu_net([[1]], [[1]]), [0.0], 0).tolist() == [0]


def test_dims_must_chain():
    with pytest.raises(InvalidInput):
        relu_net(np.ones((3, 2)), np.ones((1, 2)))


def _fd_input(net, x, k, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (forward(net, x + e)[k] - forward(net, x - e)[k]) / (2 * h)
    return g


def test_grad_input_finite_differences():
    rng = np.random.default_rng(1)
    checked = 0
    while checked < 50:
        net = init_mlp([3, 5, 4, 2], rng)
        x = rng.standard_normal(3)
        if not kink_free(net, x):
            continue
        for k in range(2):
            np.testing.assert_allclose(grad_input(net, x, k), _fd_input(net, x, k), rtol=1e-5, atol=1e-8)
        checked += 1


@pytest.mark.parametrize("loss,head", [("logistic", 1), ("cross_entropy", 3), ("ramp", 1), ("ramp", 3)])
def test_grad_weights_finite_differences(loss, head):
    rng = np.random.default_rng(2)
    for _ in range(10):
        net = init_mlp([3, 4, head], rng)
        X = rng.standard_normal((5, 3))
        y = rng.choice([-1, 1], 5) if head == 1 else rng.integers(0, head, 5)
        if not kink_free(net, X):
            continue
        gamma = 2.0 if loss == "ramp" else None
        grads = grad_weights(net, X, y, loss, gamma)
        for j, W in enumerate(net.weights):
            fd = np.zeros_like(W)
            for idx in np.ndindex(W.shape):
                ws = [w.copy() for w in net.weights]
                ws[j][idx] += 1e-6
                up = loss_value(net.with_weights(ws), X, y, loss, gamma)
                ws[j][idx] -= 2e-6
                dn = loss_value(net.with_weights(ws), X, y, loss, gamma)
                fd[idx] = (up - dn) / 2e-6
            np.testing.assert_allclose(grads[j], fd, rtol=1e-5, atol=1e-7)


def test_grad_weights_special_cases():
    net = relu_net([[0.0, 0.0]], [[0.0]])
    grads = grad_weights(net, [1.0, 2.0], 1, "logistic")
    assert np.all(grads[0] == 0)
    # large margin: logistic gradient is essentially zero
    lin = MLP((np.array([[50.0]]),), IDENTITY)
    assert np.abs(grad_weights(lin, [1.0], 1, "logistic")[0]).max() < 1e-20
    with pytest.raises(InvalidInput):
        grad_weights(lin, [1.0], 1, "hinge")


def test_margin_examples():
    assert margin_values(np.array([2.0, 0.5, -1.0]), np.int64(0)) == 1.5
    assert margin_values(np.array([1.0, 1.0]), np.int64(0)) == 0
    assert margin_values(np.array([0.0, 3.0]), np.int64(0)) == -3
    net = MLP((np.eye(2),), IDENTITY)
    assert margin(net, [0.0, 3.0], 0) == -3
    with pytest.raises(InvalidInput):
        margin(net, [0.0, 3.0], 2)


def test_ramp_examples():
    assert ramp_loss(0.5, 1) == 0.5
    assert ramp_loss(-1, 1) == 1
    assert ramp_loss(2, 1) == 0
    with pytest.raises(InvalidInput):
        ramp_loss(0.1, 0)


@settings(max_examples=300, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.01, 10))
def test_ramp_lipschitz(t1, t2, gamma):
    assert abs(ramp_loss(t1, gamma) - ramp_loss(t2, gamma)) <= abs(t1 - t2) / gamma + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3.0), st.integers(0, 1000))
def test_positive_homogeneity(c, seed):
    rng = np.random.default_rng(seed)
    net = init_mlp([3, 4, 4, 1], rng)
    x = rng.standard_normal(3)
    scaled = net.with_weights([c * w for w in net.weights])
    np.testing.assert_allclose(forward(scaled, x), c ** 3 * forward(net, x), rtol=1e-10, atol=1e-12)


def test_activation_lipschitz():
    assert RELU.lipschitz == 1 and IDENTITY.lipschitz == 1
    assert ActivationSpec("leaky_relu", 0.1).lipschitz == 1
    assert ActivationSpec("leaky_relu", 2.0).lipschitz == 2


def test_predict_binary_ties_positive():
    net = MLP((np.zeros((1, 2)),), IDENTITY)
    assert predict(net, np.ones((3, 2))).tolist() == [1, 1, 1]


def test_json_round_trip_bit_exact(tmp_path):
    net = init_mlp([3, 5, 2], np.random.default_rng(3))
    path = tmp_path / "net.json"
    net.save(path)
    back = MLP.load(path)
    assert back.dims == net.dims
    for a, b in zip(net.weights, back.weights):
        assert np.array_equal(a, b)
    doc = json.loads(path.read_text())
    assert set(doc) >= {"dims", "activation", "weights"}


def test_weights_read_only():
    net = init_mlp([2, 2, 1], np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.weights[0][0, 0] = 1.0

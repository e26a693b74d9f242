"""Bias-free fully-connected networks x -> W_l rho(W_{l-1} ... rho(W_1 x)).

The same forward/backward code handles one network (weights of shape
``(h_j, h_{j-1})``) and stacks of networks (weights of shape
``(S, h_j, h_{j-1})``) evaluated on a batch of inputs; matmul broadcasting
does the rest. Stacks are what the Rademacher estimators optimize over.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import InvalidInput, as_matrix

LOSS_KINDS = ("cross_entropy", "logistic", "ramp")


@dataclass(frozen=True)
class ActivationSpec:
    kind: str = "relu"
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in {"relu", "identity", "leaky_relu"}:
            raise InvalidInput(f"unknown activation {self.kind!r}")
        if self.kind == "leaky_relu" and self.slope < 0:
            raise InvalidInput("leaky_relu slope must be >= 0")

    @property
    def lipschitz(self) -> float:
        if self.kind == "leaky_relu":
            return max(1.0, self.slope)
        return 1.0

    def __call__(self, z):
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        if self.kind == "identity":
            return z
        return np.where(z > 0, z, self.slope * z)

    def derivative(self, z):
        # rho'(0) is taken from the left branch: 0 for ReLU
        if self.kind == "relu":
            return (z > 0).astype(np.float64)
        if self.kind == "identity":
            return np.ones_like(z)
        return np.where(z > 0, 1.0, self.slope)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "leaky_relu":
            out["slope"] = self.slope
        return out

    @classmethod
    def from_json(cls, obj) -> "ActivationSpec":
        if isinstance(obj, str):
            return cls(obj)
        return cls(obj["kind"], float(obj.get("slope", 0.0)))


RELU = ActivationSpec("relu")
IDENTITY = ActivationSpec("identity")


@dataclass(frozen=True, eq=False)
class MLP:
    """Weights W_1..W_l (W_j has shape h_j x h_{j-1}) and the activation."""

    weights: tuple
    activation: ActivationSpec = RELU
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ws = tuple(as_matrix(W).copy() for W in self.weights)
        if not ws:
            raise InvalidInput("network needs at least one layer")
        for j in range(1, len(ws)):
            if ws[j].shape[1] != ws[j - 1].shape[0]:
                raise InvalidInput(
                    f"layer {j + 1} expects {ws[j].shape[1]} inputs, layer {j} gives {ws[j - 1].shape[0]}")
        for W in ws:
            W.setflags(write=False)
        object.__setattr__(self, "weights", ws)

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def n_params(self) -> int:
        return sum(W.size for W in self.weights)

    def with_weights(self, weights) -> "MLP":
        return MLP(tuple(weights), self.activation, dict(self.provenance))

    def __call__(self, x):
        return forward(self, x)

    # serialization -------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "dims": self.dims,
            "activation": self.activation.to_json(),
            "weights": [W.tolist() for W in self.weights],
            "seed_provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MLP":
        net = cls(tuple(np.array(W, dtype=np.float64) for W in obj["weights"]),
                  ActivationSpec.from_json(obj["activation"]),
                  dict(obj.get("seed_provenance", {})))
        if "dims" in obj and list(obj["dims"]) != net.dims:
            raise InvalidInput(f"dims {obj['dims']} disagree with weights {net.dims}")
        return net

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "MLP":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def init_mlp(dims: Sequence[int], rng: np.random.Generator, activation=RELU, scale: float = 1.0) -> MLP:
    """He-style Gaussian initialization, no biases."""
    weights = [rng.standard_normal((dims[j + 1], dims[j])) * scale * math.sqrt(2.0 / dims[j])
               for j in range(len(dims) - 1)]
    return MLP(tuple(weights), activation)


# -- engine ------------------------------------------------------------------

def _T(W):
    return np.swapaxes(W, -1, -2)


def forward_pass(weights, X, act: ActivationSpec):
    """Return (output, pre-activations, layer inputs).

    ``X`` has shape (..., h_0); with stacked weights (S, h, k) the inputs
    broadcast as (P, h_0) or (S, P, h_0).
    """
    inputs, pre = [], []
    A = X
    for j, W in enumerate(weights):
        inputs.append(A)
        Z = A @ _T(W)
        if j < len(weights) - 1:
            pre.append(Z)
            A = act(Z)
        else:
            A = Z
    return A, pre, inputs


def backward_pass(weights, pre, inputs, d_out, act: ActivationSpec, need_weights=True, need_input=False):
    """Reverse accumulation given d(objective)/d(output) of shape like the output.

    Returns (list of weight gradients or None, input gradient or None).
    Weight gradients are summed over the point axis.
    """
    grads = [None] * len(weights)
    dZ = d_out
    dX = None
    for j in range(len(weights) - 1, -1, -1):
        if need_weights:
            A = inputs[j]
            g = _T(dZ) @ A
            if g.ndim > weights[j].ndim:
                g = g.sum(axis=tuple(range(g.ndim - weights[j].ndim)))
            grads[j] = g
        if j == 0 and not need_input:
            break
        dA = dZ @ weights[j]
        if j == 0:
            dX = dA
        else:
            dZ = dA * act.derivative(pre[j - 1])
    return (grads if need_weights else None), dX


# -- single-network API ---------------------------------------------------------

def _check_input(net: MLP, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.dims[0]:
        raise InvalidInput(f"input has dimension {x.shape[-1]}, network expects {net.dims[0]}")
    return x


def forward(net: MLP, x) -> np.ndarray:
    """Network output for one input (shape (d,)) or a batch (shape (n, d))."""
    x = _check_input(net, x)
    out, _, _ = forward_pass(net.weights, x, net.activation)
    return out


def grad_input(net: MLP, x, output_index: int) -> np.ndarray:
    """Gradient of output coordinate ``output_index`` with respect to the input."""
    x = _check_input(net, x)
    h_out = net.dims[-1]
    if not 0 <= output_index < h_out:
        raise InvalidInput(f"output_index {output_index} out of range for {h_out} outputs")
    out, pre, inputs = forward_pass(net.weights, x, net.activation)
    d_out = np.zeros_like(out)
    d_out[..., output_index] = 1.0
    _, dX = backward_pass(net.weights, pre, inputs, d_out, net.activation,
                          need_weights=False, need_input=True)
    return dX


def margin_values(out: np.ndarray, y) -> np.ndarray:
    """[f]_y - max_{k != y} [f]_k along the last axis."""
    y = np.asarray(y)
    K = out.shape[-1]
    true = np.take_along_axis(out, y[..., None], axis=-1)[..., 0]
    masked = np.where(np.arange(K) == y[..., None], -np.inf, out)
    return true - masked.max(axis=-1)


def margin(net: MLP, x, y: int) -> float:
    """Margin operator for a K >= 2 head; positive iff the prediction is y."""
    K = net.dims[-1]
    if K < 2:
        raise InvalidInput("margin needs a multi-class head (K >= 2)")
    if not 0 <= int(y) < K:
        raise InvalidInput(f"class {y} out of range for K={K}")
    out = forward(net, x)
    return float(margin_values(out, np.int64(y)))


def ramp_loss(t, gamma: float):
    """1 for t <= 0, 1 - t/gamma on (0, gamma), 0 for t >= gamma."""
    if not gamma > 0:
        raise InvalidInput("gamma must be positive")
    t = np.asarray(t, dtype=np.float64)
    val = np.clip(1.0 - t / gamma, 0.0, 1.0)
    return float(val) if val.ndim == 0 else val


def ramp_derivative(t, gamma: float):
    t = np.asarray(t, dtype=np.float64)
    return np.where((t > 0) & (t < gamma), -1.0 / gamma, 0.0)


def loss_and_output_grad(out: np.ndarray, y, loss_kind: str, gamma: float | None = None):
    """Per-sample loss and d(loss)/d(output) for a batch of outputs (n, h_l)."""
    y = np.asarray(y)
    if loss_kind == "logistic":
        if out.shape[-1] != 1:
            raise InvalidInput("logistic loss needs a single-output head")
        t = y * out[..., 0]
        loss = np.logaddexp(0.0, -t)
        d = -y * _sigmoid(-t)
        return loss, d[..., None]
    if loss_kind == "cross_entropy":
        if out.shape[-1] < 2:
            raise InvalidInput("cross-entropy needs a K >= 2 head")
        yi = y.astype(np.int64)
        shifted = out - out.max(axis=-1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        logp = shifted - logz
        loss = -np.take_along_axis(logp, yi[..., None], axis=-1)[..., 0]
        d = np.exp(logp)
        np.put_along_axis(d, yi[..., None], np.take_along_axis(d, yi[..., None], axis=-1) - 1.0, axis=-1)
        return loss, d
    if loss_kind == "ramp":
        if gamma is None:
            raise InvalidInput("ramp loss needs gamma")
        if out.shape[-1] == 1:
            t = y * out[..., 0]
            loss = ramp_loss(t, gamma)
            d = (ramp_derivative(t, gamma) * y)[..., None]
            return np.asarray(loss), d
        yi = y.astype(np.int64)
        K = out.shape[-1]
        m = margin_values(out, yi)
        masked = np.where(np.arange(K) == yi[..., None], -np.inf, out)
        k_star = masked.argmax(axis=-1)
        dm = np.zeros_like(out)
        np.put_along_axis(dm, yi[..., None], 1.0, axis=-1)
        np.put_along_axis(dm, k_star[..., None], -1.0, axis=-1)
        return np.asarray(ramp_loss(m, gamma)), ramp_derivative(m, gamma)[..., None] * dm
    raise InvalidInput(f"unknown loss kind {loss_kind!r}")


def _sigmoid(t):
    return np.where(t >= 0, 1.0 / (1.0 + np.exp(-np.abs(t))), np.exp(-np.abs(t)) / (1.0 + np.exp(-np.abs(t))))


def loss_value(net: MLP, X, y, loss_kind: str, gamma: float | None = None) -> float:
    """Mean loss over a batch."""
    X = _check_input(net, np.atleast_2d(X))
    out, _, _ = forward_pass(net.weights, X, net.activation)
    loss, _ = loss_and_output_grad(out, np.atleast_1d(y), loss_kind, gamma)
    return float(np.mean(loss))


def grad_weights(net: MLP, x, y, loss_kind: str, gamma: float | None = None) -> list[np.ndarray]:
    """Gradient of the mean loss over (x, y) with respect to every weight matrix.

    ``x`` may be one input or a batch; ``y`` is +-1 for binary heads and a
    class index for multi-class heads.
    """
    if loss_kind not in LOSS_KINDS:
        raise InvalidInput(f"unknown loss kind {loss_kind!r}")
    X = _check_input(net, np.atleast_2d(x))
    y = np.atleast_1d(y)
    out, pre, inputs = forward_pass(net.weights, X, net.activation)
    _, d_out = loss_and_output_grad(out, y, loss_kind, gamma)
    grads, _ = backward_pass(net.weights, pre, inputs, d_out / X.shape[0], net.activation)
    return grads


def predict(net: MLP, X) -> np.ndarray:
    """Class predictions: sign for binary heads (+1 on ties), argmax otherwise."""
    out = forward(net, np.atleast_2d(X))
    if out.shape[-1] == 1:
        return np.where(out[:, 0] >= 0, 1, -1)
    return out.argmax(axis=-1)


def signed_margins(net: MLP, X, y) -> np.ndarray:
    """y f(x) for binary heads, the margin operator for multi-class heads."""
    out = forward(net, np.atleast_2d(X))
    y = np.asarray(y)
    if out.shape[-1] == 1:
        return y * out[:, 0]
    return margin_values(out, y.astype(np.int64))

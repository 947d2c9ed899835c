"""Dense layers, MLPs and the Adam optimizer used by every network here.

Weight initialization is uniform in +-sqrt(6 / (fan_in + fan_out)); biases
start at zero. Hidden activations default to leaky ReLU (slope 0.01).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import (
    LEAKY_SLOPE,
    Var,
    _sigmoid,
    add,
    assert_finite,
    leaky_relu,
    matmul,
    parameter,
    relu,
    sigmoid,
)

ACTIVATIONS = ("identity", "relu", "leaky_relu", "sigmoid")


def apply_activation(name: str, x: np.ndarray) -> np.ndarray:
    """Pure numpy activation, shared with the graph ops so that a forward
    pass through raw weights is bit-identical to the autodiff forward."""
    if name == "identity":
        return x
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "leaky_relu":
        return np.where(x > 0, x, LEAKY_SLOPE * x)
    if name == "sigmoid":
        return _sigmoid(x)
    raise ValueError(f"unknown activation {name!r}, expected one of {ACTIVATIONS}")


def _activate(name: str, x: Var) -> Var:
    if name == "identity":
        return x
    if name == "relu":
        return relu(x)
    if name == "leaky_relu":
        return leaky_relu(x)
    if name == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {name!r}, expected one of {ACTIVATIONS}")


def init_weight(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class DenseLayer:
    """Affine map plus activation: act(x @ W + b), W is (in_dim, out_dim)."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "identity",
                 rng: np.random.Generator | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}, expected one of {ACTIVATIONS}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.weight = parameter(init_weight(rng, in_dim, out_dim))
        self.bias = parameter(np.zeros((1, out_dim)))

    def forward(self, x: Var) -> Var:
        return _activate(self.activation, add(matmul(x, self.weight), self.bias))

    def forward_value(self, x: np.ndarray) -> np.ndarray:
        return apply_activation(self.activation, x @ self.weight.value + self.bias.value)

    def params(self) -> list[Var]:
        return [self.weight, self.bias]


class MLP:
    """A stack of dense layers defined by a dim chain [d0, d1, ..., dk]."""

    def __init__(self, dims: Sequence[int], rng: np.random.Generator,
                 hidden_activation: str = "leaky_relu",
                 output_activation: str = "identity"):
        if len(dims) < 2:
            raise ValueError(f"an MLP needs at least two dims, got {list(dims)}")
        self.layers: list[DenseLayer] = []
        for i in range(len(dims) - 1):
            act = output_activation if i == len(dims) - 2 else hidden_activation
            self.layers.append(DenseLayer(dims[i], dims[i + 1], act, rng))

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: Var) -> Var:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def forward_value(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward_value(x)
        return x

    def params(self) -> list[Var]:
        return [p for layer in self.layers for p in layer.params()]


class Adam:
    """Adam with bias correction: p -= lr * m_hat / (sqrt(v_hat) + eps)."""

    def __init__(self, params: Sequence[Var], lr: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            assert_finite(p.value, f"parameter after Adam step {self.t}")

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

"""Feedforward networks with a one-parameter activation family, trained by hand.

Every hidden neuron uses

    sigma_alpha(t) = (1 - alpha) * leaky_relu(t) + alpha * swish(t),

so ``alpha = 0`` gives a piecewise-linear unit and ``alpha = 1`` a smooth one.
The last layer of a :class:`DenseNet` is affine.  Gradients come from an
explicit reverse pass over the cached activations (no autodiff framework).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DomainError

LEAKY_SLOPE = 0.01


def _check_alpha(alpha):
    a = np.asarray(alpha, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a < 0.0) or np.any(a > 1.0):
        raise DomainError(f"activation parameter must lie in [0, 1], got {alpha!r}")
    return a


def _act(a, t):
    if not np.any(a):
        return np.where(t >= 0, t, LEAKY_SLOPE * t)
    swish = t * expit(t)
    if np.all(a == 1.0):
        return swish
    return (1.0 - a) * np.where(t >= 0, t, LEAKY_SLOPE * t) + a * swish


def _act_grad(a, t):
    d_leaky = np.where(t >= 0, 1.0, LEAKY_SLOPE)
    if not np.any(a):
        return d_leaky
    s = expit(t)
    d_swish = s + t * s * (1.0 - s)
    if np.all(a == 1.0):
        return d_swish
    return (1.0 - a) * d_leaky + a * d_swish


def activation(alpha, t):
    """Evaluate the activation family at parameter ``alpha`` (broadcasts)."""
    a = _check_alpha(alpha)
    out = _act(a, np.asarray(t, dtype=float))
    return float(out) if out.ndim == 0 else out


def activation_grad(alpha, t):
    """Derivative of :func:`activation` with respect to ``t``."""
    return _act_grad(_check_alpha(alpha), np.asarray(t, dtype=float))


def softmax(w):
    """Softmax of a vector, or row-wise softmax of a 2-D array."""
    w = np.asarray(w, dtype=float)
    if w.size == 0 or w.shape[-1] == 0:
        raise DomainError("softmax of an empty vector")
    if np.any(np.isnan(w)):
        raise DomainError("softmax input contains NaN")
    z = w - np.max(w, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_backward(s, ds):
    """Pull a gradient on softmax outputs ``s`` back to the logits."""
    return s * (ds - np.sum(ds * s, axis=-1, keepdims=True))


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    alpha: np.ndarray  # (out,), ignored on the output layer


@dataclass
class DenseNet:
    """Stack of affine maps with the activation family between them."""

    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise DomainError("a network needs at least one layer")
        for j, layer in enumerate(self.layers):
            w = np.asarray(layer.weight, dtype=float)
            if w.ndim != 2:
                raise DomainError(f"layer {j}: weight must be a matrix")
            b = np.asarray(layer.bias, dtype=float).reshape(-1)
            if b.shape != (w.shape[0],):
                raise DomainError(f"layer {j}: bias shape {b.shape} does not match weight {w.shape}")
            a = np.broadcast_to(_check_alpha(layer.alpha), (w.shape[0],)).astype(float)
            self.layers[j] = Layer(w, b, a)
        for j in range(1, len(self.layers)):
            if self.layers[j].weight.shape[1] != self.layers[j - 1].weight.shape[0]:
                raise DomainError(f"layer {j} input width does not chain with layer {j - 1}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [layer.weight.shape[0] for layer in self.layers]

    @classmethod
    def init(cls, sizes, rng, alpha=0.0, scale=1.0) -> "DenseNet":
        """Glorot-uniform weights, zero biases, one ``alpha`` for every hidden unit."""
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise ConfigError(f"invalid layer sizes {sizes!r}")
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = scale * np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            layers.append(Layer(w, np.zeros(fan_out), np.full(fan_out, float(alpha))))
        return cls(layers)

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.weight.copy(), l.bias.copy(), l.alpha.copy()) for l in self.layers])

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"weight": l.weight.tolist(), "bias": l.bias.tolist(), "alpha": l.alpha.tolist()}
                for l in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, d) -> "DenseNet":
        return cls(
            [
                Layer(np.array(l["weight"], dtype=float), np.array(l["bias"], dtype=float),
                      np.array(l["alpha"], dtype=float))
                for l in d["layers"]
            ]
        )

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class Tape:
    """Per-layer inputs and pre-activations recorded by :func:`forward`."""

    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    batched: bool


@dataclass
class GradientBundle:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def zeros_like(cls, net: DenseNet) -> "GradientBundle":
        return cls([np.zeros_like(l.weight) for l in net.layers], [np.zeros_like(l.bias) for l in net.layers])

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in zip(self.weights, self.biases)])


def forward(net: DenseNet, x):
    """Run the network on one input vector or on a batch of row vectors."""
    x = np.asarray(x, dtype=float)
    batched = x.ndim == 2
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise DomainError(f"expected input of width {net.input_dim}, got shape {x.shape}")
    h = x if batched else x[None, :]
    inputs, preacts = [], []
    last = len(net.layers) - 1
    for j, layer in enumerate(net.layers):
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        preacts.append(z)
        h = z if j == last else _act(layer.alpha, z)
    y = h if batched else h[0]
    return y, Tape(inputs, preacts, batched)


def backward(net: DenseNet, tape: Tape, dy) -> GradientBundle:
    """Reverse pass; batched gradients are summed over the batch."""
    if len(tape.inputs) != len(net.layers) or any(
        inp.shape[1] != l.weight.shape[1] or z.shape[1] != l.weight.shape[0]
        for inp, z, l in zip(tape.inputs, tape.preacts, net.layers)
    ):
        raise DomainError("tape does not belong to this network")
    g = np.asarray(dy, dtype=float)
    g = g if tape.batched else g[None, :]
    if g.shape != tape.preacts[-1].shape:
        raise DomainError(f"upstream gradient shape {g.shape} does not match output {tape.preacts[-1].shape}")
    n = len(net.layers)
    dws, dbs = [None] * n, [None] * n
    for j in range(n - 1, -1, -1):
        layer = net.layers[j]
        if j != n - 1:
            g = g * _act_grad(layer.alpha, tape.preacts[j])
        dws[j] = g.T @ tape.inputs[j]
        dbs[j] = g.sum(axis=0)
        g = g @ layer.weight
    return GradientBundle(dws, dbs, g if tape.batched else g[0])


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")


@dataclass
class OptimizerState:
    step: int = 0
    m: list | None = None
    v: list | None = None


def optimizer_step(net: DenseNet, grads: GradientBundle, state: OptimizerState | None,
                   config: OptimizerConfig, trainable=None):
    """One SGD or Adam update; returns a new network and the new state.

    ``trainable`` is an optional collection of layer indices; other layers
    are copied through untouched.
    """
    if len(grads.weights) != len(net.layers) or any(
        g.shape != l.weight.shape or gb.shape != l.bias.shape
        for g, gb, l in zip(grads.weights, grads.biases, net.layers)
    ):
        raise DomainError("gradient shapes do not match the network")
    state = state or OptimizerState()
    params = [p for l in net.layers for p in (l.weight, l.bias)]
    gs = [g for pair in zip(grads.weights, grads.biases) for g in pair]
    active = set(range(len(net.layers))) if trainable is None else set(trainable)
    mask = [i // 2 in active for i in range(len(params))]

    if config.kind == "sgd":
        new = [p - config.lr * g if on else p for p, g, on in zip(params, gs, mask)]
        new_state = OptimizerState(state.step + 1)
    else:
        t = state.step + 1
        m_prev = state.m or [np.zeros_like(p) for p in params]
        v_prev = state.v or [np.zeros_like(p) for p in params]
        m = [config.beta1 * mp + (1 - config.beta1) * g for mp, g in zip(m_prev, gs)]
        v = [config.beta2 * vp + (1 - config.beta2) * g * g for vp, g in zip(v_prev, gs)]
        c1 = 1 - config.beta1**t
        c2 = 1 - config.beta2**t
        new = [
            p - config.lr * (mi / c1) / (np.sqrt(vi / c2) + config.eps) if on else p
            for p, mi, vi, on in zip(params, m, v, mask)
        ]
        new_state = OptimizerState(t, m, v)
    # shapes are unchanged, so skip re-validation
    updated = object.__new__(DenseNet)
    updated.layers = [Layer(new[2 * j], new[2 * j + 1], l.alpha) for j, l in enumerate(net.layers)]
    return updated, new_state

"""MLPs for generator, critic and auxiliary model; Adam; generator output heads."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .encoder import Block
from .errors import ShapeMismatch

NOISE_DIM = 100
HIDDEN = (256, 256)
AUX_HIDDEN = (256, 256, 256, 256)
LEAKY_SLOPE = 0.2
GUMBEL_TAU = 0.2


class MLP:
    """Fully connected net with LeakyReLU hidden layers and a linear output."""

    def __init__(self, sizes, rng: np.random.Generator | None = None, slope: float = LEAKY_SLOPE,
                 params: list[np.ndarray] | None = None, dtype=np.float64):
        self.sizes = tuple(int(s) for s in sizes)
        self.slope = slope
        self.dtype = np.dtype(dtype)
        if params is not None:
            self.params = [np.array(p, dtype=self.dtype) for p in params]
            return
        self.params = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(self.dtype))
            self.params.append(rng.uniform(-bound, bound, size=(1, fan_out)).astype(self.dtype))

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def leaves(self) -> list[ad.Node]:
        return [ad.leaf(p) for p in self.params]

    def forward(self, x, leaves=None, *, return_features: bool = False):
        """Run the net; ``leaves`` (from :meth:`leaves`) makes the weights differentiable.

        With ``return_features`` also returns the activations of the last hidden layer.
        """
        ws = leaves if leaves is not None else [ad.constant(p) for p in self.params]
        h = x if isinstance(x, ad.Node) else ad.Node(np.asarray(x, dtype=self.dtype))
        features = h
        n_layers = len(ws) // 2
        for i in range(n_layers):
            h = ad.add(ad.matmul(h, ws[2 * i]), ws[2 * i + 1])
            if i < n_layers - 1:
                h = ad.leaky_relu(h, self.slope)
                features = h
        return (h, features) if return_features else h

    def __call__(self, x):
        with ad.no_grad():
            return self.forward(x).value


def parameter_count(sizes) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> list[np.ndarray]:
    """One Adam update; returns new parameter arrays and advances ``state``."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeMismatch("parameter and gradient shapes differ")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        out.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return out


class Adam:
    def __init__(self, net: MLP, lr: float = 2e-4, betas=(0.5, 0.9), eps: float = 1e-8):
        self.net = net
        self.state = AdamState(lr, betas[0], betas[1], eps)

    def step(self, grads: list[np.ndarray]) -> None:
        self.net.params = adam_step(self.net.params, grads, self.state)


def gumbel_softmax(logits, tau: float, rng: np.random.Generator):
    u = rng.random(logits.shape)
    gumbel = (-np.log(-np.log(u + 1e-20) + 1e-20)).astype(logits.value.dtype)
    return ad.softmax(ad.mul(ad.add(logits, gumbel), 1.0 / tau))


def apply_heads(raw, layout: tuple[Block, ...], *, train: bool, rng: np.random.Generator | None = None,
                tau: float = GUMBEL_TAU):
    """tanh on scalar slots; gumbel-softmax (train) or argmax one-hot (sampling) on one-hot blocks."""
    raw = ad._as_node(raw)
    parts = []
    for b in layout:
        if b.has_alpha:
            parts.append(ad.tanh(raw[:, b.offset:b.offset + 1]))
        if b.n_options:
            s = b.option_offset
            logits = raw[:, s:s + b.n_options]
            if train:
                parts.append(gumbel_softmax(logits, tau, rng))
            else:
                hot = np.zeros(logits.shape, dtype=logits.value.dtype)
                hot[np.arange(len(hot)), np.argmax(logits.value, axis=1)] = 1.0
                parts.append(ad.constant(hot))
    return ad.concat(parts, axis=1)


def generator_forward(net: MLP, z, cond, layout, *, train: bool = False, rng=None, leaves=None,
                      tau: float = GUMBEL_TAU):
    """Return (activated rows, raw logits) as nodes."""
    x = np.concatenate([np.asarray(z, dtype=net.dtype), np.asarray(cond, dtype=net.dtype)], axis=1)
    raw = net.forward(x, leaves)
    return apply_heads(raw, layout, train=train, rng=rng, tau=tau), raw

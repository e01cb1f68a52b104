"""Dense networks with hand-written reverse-mode gradients (float64)."""
from __future__ import annotations

import numpy as np


class DenseNet:
    """Fully connected net: rectifier hidden layers, ``tanh`` or identity output."""

    def __init__(self, sizes, output="identity", rng=None, final_scale=3e-3):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if output not in ("identity", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        rng = np.random.default_rng(0) if rng is None else rng
        self.W, self.b = [], []
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = final_scale if i == n_layers - 1 else 1.0 / np.sqrt(fan_in)
            self.W.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.b.append(rng.uniform(-bound, bound, size=fan_out))
        self._cache = None

    # parameters are exposed as an interleaved list [W0, b0, W1, b1, ...]
    def params(self) -> list:
        out = []
        for W, b in zip(self.W, self.b):
            out += [W, b]
        return out

    def copy(self) -> "DenseNet":
        net = DenseNet.__new__(DenseNet)
        net.sizes, net.output = self.sizes, self.output
        net.W = [w.copy() for w in self.W]
        net.b = [b.copy() for b in self.b]
        net._cache = None
        return net

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat) -> None:
        i = 0
        for p in self.params():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.sizes[0]}")
        acts = [h]
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            z = h @ W + b
            if i < last:
                h = np.maximum(z, 0.0)
            else:
                h = np.tanh(z) if self.output == "tanh" else z
            acts.append(h)
        self._cache = acts
        return h[0] if single else h

    __call__ = forward

    def backward(self, grad_out):
        """Backprop ``grad_out`` (dLoss/dOutput) through the last forward pass.

        Returns ``(grads, grad_input)`` with ``grads`` in ``params()`` order.
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        acts = self._cache
        g = np.asarray(grad_out, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        last = len(self.W) - 1
        if self.output == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        grads = [None] * (2 * len(self.W))
        for i in range(last, -1, -1):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.W[i].T
            if i > 0:
                g = g * (acts[i] > 0.0)
        return grads, g


class Sgd:
    def __init__(self, params, lr):
        self.params, self.lr = params, lr

    def step(self, grads):
        for p, g in zip(self.params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params, self.lr = params, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, params, lr):
    if kind == "sgd":
        return Sgd(params, lr)
    if kind == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def soft_update(primary: DenseNet, target: DenseNet, tau: float) -> DenseNet:
    """target <- tau * primary + (1 - tau) * target, in place."""
    if primary.sizes != target.sizes:
        raise ValueError("network shapes differ")
    for p, q in zip(primary.params(), target.params()):
        q *= 1.0 - tau
        q += tau * p
    return target

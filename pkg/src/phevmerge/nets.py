"""Small fully connected networks with hand-written reverse-mode gradients.

An :class:`Mlp` holds a stack of identically shaped networks in one set of
3-D arrays so that twin critics evaluate in a single batched matmul. The
forward pass records the per-layer inputs and ReLU masks; ``backward``
replays them to produce parameter gradients and the input gradient.

:class:`Adam` implements the usual moment-based update,

    m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
    p <- p - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)

operating in place on the parameter arrays.
"""

from __future__ import annotations

import math

import numpy as np


class Mlp:
    """ReLU network stack: sizes[0] -> ... -> sizes[-1], `stack` copies."""

    def __init__(self, sizes, stack=1, rng=None, final_scale=1.0):
        rng = rng or np.random.default_rng(0)
        self.sizes = tuple(sizes)
        self.stack = stack
        self.n_layers = len(sizes) - 1
        self.params = []
        for i in range(self.n_layers):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            bound = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(stack, fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=(stack, fan_out))
            if i == self.n_layers - 1 and final_scale != 1.0:
                w *= final_scale
                b *= final_scale
            self.params += [w, b]

    def forward(self, x, want_cache=False):
        """x: (B, in) or (stack, B, in). Returns (stack, B, out)[, cache]."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim == 2:
            h = np.broadcast_to(x, (self.stack,) + x.shape)
        else:
            h = x
        inputs = []
        for i in range(self.n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            inputs.append(h)
            z = h @ w
            z += b[:, None, :]
            if i < self.n_layers - 1:
                np.maximum(z, 0.0, out=z)
            h = z
        if want_cache:
            return h, inputs
        return h

    def backward(self, cache, dout, need_input_grad=True):
        """Gradients of sum(dout * output) w.r.t. params and input.

        Returns (grads, dx): grads matches self.params order, dx is
        (stack, B, in) or None when not requested. The ReLU gates are
        recovered from the cached post-activation layer inputs.
        """
        inputs = cache
        grads = [None] * len(self.params)
        g = np.asarray(dout, dtype=float)
        for i in range(self.n_layers - 1, -1, -1):
            h_in = inputs[i]
            grads[2 * i] = h_in.transpose(0, 2, 1) @ g
            grads[2 * i + 1] = g.sum(axis=1)
            if i == 0 and not need_input_grad:
                return grads, None
            g = g @ self.params[2 * i].transpose(0, 2, 1)
            if i > 0:
                g *= h_in > 0.0
        return grads, g

    # -- flat parameter views (checkpoints, finite-difference tests) -------

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=float)
        total = sum(p.size for p in self.params)
        if vec.size != total:
            raise ValueError(f"expected {total} parameters, got {vec.size}")
        offset = 0
        for p in self.params:
            p[...] = vec[offset:offset + p.size].reshape(p.shape)
            offset += p.size

    def copy(self) -> "Mlp":
        dup = Mlp.__new__(Mlp)
        dup.sizes = self.sizes
        dup.stack = self.stack
        dup.n_layers = self.n_layers
        dup.params = [p.copy() for p in self.params]
        return dup


def polyak_update(target: Mlp, online: Mlp, tau: float):
    """target <- (1 - tau) * target + tau * online, in place."""
    for pt, po in zip(target.params, online.params):
        pt *= 1.0 - tau
        pt += tau * po


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

"""Adam optimizer and the piecewise-constant halving learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LrSchedule:
    """Learning rate halved every ``halve_every`` updates, pinned at ``floor``."""

    initial_lr: float = 1e-4
    halve_every: int = 10_000
    floor: float = 1e-6

    def __post_init__(self):
        if self.initial_lr <= 0 or self.floor <= 0:
            raise ValueError("learning rates must be positive")
        if self.halve_every < 1:
            raise ValueError("halve_every must be at least 1")

    def lr_at(self, t):
        if t < 0:
            raise ValueError("update index must be non-negative")
        lr = self.initial_lr * 2.0 ** -(t // self.halve_every)
        return max(lr, self.floor)


class Adam:
    """Standard Adam with bias correction over a fixed parameter list.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr):
        if lr <= 0:
            raise ValueError("lr must be positive")
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"parameter {i} has no gradient; run backward first")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * np.square(g)
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            p.data -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype, copy=False)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_arrays(self):
        """Moment buffers and step count, for checkpointing."""
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state_arrays(self, state):
        if len(state["m"]) != len(self.params) or len(state["v"]) != len(self.params):
            raise ValueError("optimizer state does not match parameter list")
        for got, p in zip(state["m"], self.params):
            if got.shape != p.data.shape:
                raise ValueError("optimizer moment shape mismatch")
        self.t = int(state["t"])
        self.m = [np.asarray(a, dtype=p.dtype) for a, p in zip(state["m"], self.params)]
        self.v = [np.asarray(a, dtype=p.dtype) for a, p in zip(state["v"], self.params)]

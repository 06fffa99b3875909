"""Optimizers and learning-rate schedules, updating parameter arrays in place."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SGDMomentum:
    """Heavy-ball SGD with L2 weight decay folded into the gradient."""

    def __init__(self, params, lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        if not lr > 0:
            raise ValueError("lr must be positive")
        if not 0 <= momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._buf = [np.zeros_like(p) for p in self.params]

    def step(self, grads, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        for p, g, buf in zip(self.params, grads, self._buf):
            if self.weight_decay:
                g = g + self.weight_decay * p
            buf *= self.momentum
            buf += g
            p -= lr * buf


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, weight_decay: float = 0.0, eps: float = 1e-8):
        if not lr > 0:
            raise ValueError("lr must be positive")
        if not (0 < beta1 < 1 and 0 < beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.eps = eps
        self._m = [np.zeros_like(p) for p in self.params]
        self._v = [np.zeros_like(p) for p in self.params]
        self._t = 0

    def step(self, grads, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self._t += 1
        c1 = 1.0 - self.beta1**self._t
        c2 = 1.0 - self.beta2**self._t
        for p, g, m, v in zip(self.params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay:
                p -= lr * self.weight_decay * p
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class Schedule:
    """``constant``, ``multistep`` (decay by gamma at epoch milestones) or ``cosine`` (linear warmup, then cosine to 0)."""

    kind: str = "constant"
    milestones: tuple = ()
    gamma: float = 0.1
    warmup_steps: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "multistep", "cosine"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")

    def lr(self, base: float, step: int, epoch: int, total_steps: int) -> float:
        """Learning rate for optimizer step ``step`` (0-based) taken during ``epoch`` (1-based)."""
        if self.kind == "constant":
            return base
        if self.kind == "multistep":
            passed = sum(1 for m in self.milestones if epoch > m)
            return base * self.gamma**passed
        if step < self.warmup_steps:
            return base * (step + 1) / self.warmup_steps
        span = max(total_steps - self.warmup_steps, 1)
        frac = min((step - self.warmup_steps) / span, 1.0)
        return base * 0.5 * (1.0 + math.cos(math.pi * frac))

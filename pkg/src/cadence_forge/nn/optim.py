"""AdamW, learning-rate schedule, gradient clipping and weight averaging."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ValidationError


class AdamW:
    """Adam with decoupled weight decay.

    Decay is applied only to parameters with two or more dimensions
    (weights), not to biases or normalization scales.
    """

    def __init__(self, params, lr: float = 3e-4, weight_decay: float = 0.05,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            if self.weight_decay and p.ndim >= 2:
                p.data -= self.lr * self.weight_decay * p.data
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


def cosine_lr(step: int, total_steps: int, warmup_steps: int, base_lr: float, min_frac: float) -> float:
    """Linear warmup then cosine decay to ``min_frac * base_lr`` at the last step."""
    if total_steps < 1 or step < 0 or step >= total_steps:
        raise ValidationError(f"step {step} outside [0, {total_steps})")
    if step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    span = max(1, total_steps - 1 - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    floor = min_frac * base_lr
    return floor + 0.5 * (base_lr - floor) * (1.0 + math.cos(math.pi * progress))


class EMA:
    """Exponential moving average of a model's state (parameters and buffers)."""

    def __init__(self, model, decay: float):
        if not 0.0 <= decay < 1.0:
            raise ValidationError("EMA decay must lie in [0, 1)")
        self.decay = decay
        self.shadow = {k: v.astype(np.float64) for k, v in model.state_dict().items()}

    def update(self, model) -> None:
        rate = 1.0 - self.decay
        for name, value in model.state_dict().items():
            s = self.shadow[name]
            s -= rate * (s - value)

    def state(self, like) -> dict:
        return {k: v.astype(like[k].dtype) for k, v in self.shadow.items()}


class SWA:
    """Equal-weight running average of snapshots."""

    def __init__(self):
        self.count = 0
        self.average = None

    def update(self, state: dict) -> None:
        if self.average is None:
            self.average = {k: np.asarray(v, dtype=np.float64).copy() for k, v in state.items()}
        else:
            n = self.count + 1
            for k, v in state.items():
                self.average[k] += (v - self.average[k]) / n
        self.count += 1

    def state(self, like) -> dict:
        if self.average is None:
            raise ValidationError("SWA has no snapshots yet")
        return {k: v.astype(like[k].dtype) for k, v in self.average.items()}

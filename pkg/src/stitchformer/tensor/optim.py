"""Adam with decoupled weight decay and a linear warmup schedule."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError

# Table-4 defaults shared by the policy and the encoder.
BASE_LR = 1.2e-4
WEIGHT_DECAY = 1e-4
WARMUP_STEPS = 10000


def warmup_lr(step: int, base_lr: float, warmup_steps: int) -> float:
    """Linear ramp from 0 at step 0 to ``base_lr`` at ``warmup_steps``, then flat."""
    if warmup_steps <= 0:
        return base_lr
    return base_lr * min(1.0, step / warmup_steps)


class AdamW:
    def __init__(self, params, lr: float = BASE_LR, weight_decay: float = WEIGHT_DECAY,
                 warmup_steps: int = WARMUP_STEPS, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        if not self.params:
            raise ContractError("optimizer needs at least one parameter")
        self.base_lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.warmup_steps = int(warmup_steps)
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    @property
    def lr(self) -> float:
        return warmup_lr(self.step_count, self.base_lr, self.warmup_steps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise ContractError(f"parameter {p.name or p.shape} has no gradient")
        lr = self.lr
        b1, b2 = self.betas
        t = self.step_count + 1
        c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= (lr * update).astype(p.data.dtype)
        self.step_count += 1

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in self.params)))

    def state_arrays(self) -> dict:
        out = {"step": np.array([self.step_count], dtype=np.float64)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m.{i}"] = m
            out[f"v.{i}"] = v
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        self.step_count = int(arrays["step"][0])
        for i in range(len(self.params)):
            self.m[i] = np.array(arrays[f"m.{i}"], dtype=self.params[i].data.dtype)
            self.v[i] = np.array(arrays[f"v.{i}"], dtype=self.params[i].data.dtype)

"""Adam optimizer and the warmup / inverse-sqrt learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .nn import ParamStore


def lr_at(step: int, peak: float, warmup: int) -> float:
    """Learning rate at 1-based step: linear warmup, then inverse sqrt decay.

    lr(s) = peak * min(s / warmup, sqrt(warmup / s)); both branches meet
    at s = warmup, so the schedule is continuous and non-increasing after
    the peak.
    """
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    return peak * min(step / warmup, math.sqrt(warmup / step))


class Adam:
    """Adam with bias-corrected moment estimates.

    ``step()`` applies the update using each parameter's accumulated
    gradient and then clears all gradients. Parameters whose grad is None
    (not touched by the loss) are skipped.
    """

    def __init__(
        self,
        store: ParamStore,
        lr: float = 1e-3,
        betas: tuple = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.store = store
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in store.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in store.items()}

    def step(self, lr: float = None):
        rate = self.lr if lr is None else lr
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in self.store.items():
            if p.grad is None:
                continue
            g = p.grad.astype(p.data.dtype, copy=False)
            m = self._m[k]
            v = self._v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p.data = p.data - rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self.store.zero_grad()

    def state_arrays(self) -> dict:
        out = {"__step__": np.asarray([self.t], dtype=np.int64)}
        for k in self._m:
            out[f"m.{k}"] = self._m[k]
            out[f"v.{k}"] = self._v[k]
        return out

    def load_arrays(self, arrays: dict):
        self.t = int(arrays["__step__"][0])
        for k in self._m:
            self._m[k] = arrays[f"m.{k}"].astype(self._m[k].dtype, copy=True)
            self._v[k] = arrays[f"v.{k}"].astype(self._v[k].dtype, copy=True)

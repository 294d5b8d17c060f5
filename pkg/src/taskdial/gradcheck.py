"""Finite-difference gradient checking for the autodiff core.

Runs in float64 (switch via ``tensor.use_dtype``) with central differences.
The checker compares analytic gradients against (f(x+h) - f(x-h)) / 2h
coordinate by coordinate and reports the worst relative error.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1, |a|, |n|) over all coordinates."""
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.abs(analytic - numeric).max(initial=0.0) / denom.max(initial=1.0)) if analytic.size else 0.0


def _per_coord_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max())


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_coords_per_param: int = None,
    rng: np.random.Generator = None,
) -> float:
    """Compare analytic grads of ``fn()`` (a scalar) against central differences.

    ``fn`` must rebuild the forward pass from the current parameter values
    each call. When ``max_coords_per_param`` is set, a random subset of
    coordinates per parameter is probed (seeded via ``rng``). Returns the
    worst per-coordinate relative error across all probed coordinates.
    """
    for p in params:
        p.grad = None
    loss = fn()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.grad = None

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = np.arange(n)
        a_flat = a.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            with T.no_grad():
                up = fn().item()
            flat[i] = orig - h
            with T.no_grad():
                down = fn().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(1.0, abs(a_flat[i]), abs(numeric))
            err = abs(a_flat[i] - numeric) / denom
            worst = max(worst, err)
    return worst

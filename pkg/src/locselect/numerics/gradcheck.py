"""Finite-difference gradient verification for any loss over a ParamStore."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamStore
from .rng import SplitMix64
from .tensor import Tensor


def gradient_check(
    loss_fn: Callable[[], Tensor],
    store: ParamStore,
    h: float = 1e-5,
    max_entries_per_param: int = 8,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must rebuild the graph (and return a scalar Tensor) on every
    call, deterministically. For each parameter a sample of entries is
    perturbed by +-h; the relative error is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
    """
    store.zero_grads()
    loss = loss_fn()
    loss.backward()
    analytic = {name: t.grad.copy() for name, t in store.items()}
    store.zero_grads()

    rng = SplitMix64(seed)
    worst = 0.0
    for name, tensor in store.items():
        size = tensor.data.size
        if size <= max_entries_per_param:
            indices = range(size)
        else:
            indices = sorted({rng.next_u64() % size for _ in range(max_entries_per_param)})
        flat = tensor.data.reshape(-1)
        for idx in indices:
            original = flat[idx]
            flat[idx] = original + h
            upper = float(loss_fn().data)
            flat[idx] = original - h
            lower = float(loss_fn().data)
            flat[idx] = original
            numeric = (upper - lower) / (2.0 * h)
            ana = float(analytic[name].reshape(-1)[idx])
            err = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-12)
            worst = max(worst, err)
    return worst

"""Shared training-loop plumbing: hyperparameters, splits, epoch shuffling.

Epoch shuffles are derived from (seed, epoch) rather than a mutable RNG, so
an interrupted run that resumes from a checkpoint replays the exact same
batch order as an uninterrupted one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import AdamState, ParamStore, derive_seed


@dataclass(frozen=True)
class TrainHyper:
    epochs: int = 30
    batch_clips: int = 8
    lr: float = 1e-4
    seed: int = 0
    val_fraction: float = 0.1
    max_val_clips: int = 16


def split_train_val(n: int, val_fraction: float, max_val: int) -> tuple[list[int], list[int]]:
    """Deterministic strided split; datasets ordered by SNR stay stratified."""
    n_val = min(int(round(n * val_fraction)), max_val, n - 1)
    n_val = max(n_val, 0)
    if n_val == 0:
        return list(range(n)), []
    stride = n / n_val
    val = sorted({min(int(i * stride), n - 1) for i in range(n_val)})
    train = [i for i in range(n) if i not in set(val)]
    return train, val


def epoch_order(seed: int, epoch: int, indices: list[int]) -> list[int]:
    rng = np.random.default_rng(np.random.PCG64(derive_seed(seed, f"epoch-{epoch}")))
    return [indices[i] for i in rng.permutation(len(indices))]


def batches(order: list[int], batch_size: int) -> list[list[int]]:
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


@dataclass
class TrainResult:
    params: ParamStore
    adam: AdamState
    history: list[dict]

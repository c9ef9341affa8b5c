"""Speaker-conditioned mask network.

A reference utterance's magnitude spectrogram is encoded per frame, mean-
pooled and length-normalized into a speaker embedding. The mask head sees
each mixture frame concatenated with that embedding, runs it through
dense+ReLU, a BiGRU and a Sigmoid output, and emits a [0, 1] mask over the
mixture's time-frequency grid. Supervision is the ideal ratio mask, which
the simulator can compute exactly from the clean components.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .numerics import (
    AdamState,
    ParamStore,
    Tensor,
    adam_step,
    bigru_forward_batch,
    concat,
    dense_forward,
    derive_seed,
    mse_loss,
    no_grad,
)
from .numerics.layers import init_gru_params
from .training import TrainHyper, TrainResult, batches, epoch_order, split_train_val

IRM_EPS = 1e-8


@dataclass(frozen=True)
class MaskNetConfig:
    n_freq: int = 201
    enc_hidden: int = 128
    embed_dim: int = 64
    pre_hidden: int = 256
    gru_hidden: int = 128

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MaskNetConfig":
        return cls(**d)


def init_masknet_params(config: MaskNetConfig, seed: int) -> ParamStore:
    store = ParamStore(seed)
    c = config
    store.add("embed.fc1.w", (c.n_freq, c.enc_hidden), fan_in=c.n_freq)
    store.add("embed.fc1.b", (c.enc_hidden,), fan_in=c.n_freq)
    store.add("embed.fc2.w", (c.enc_hidden, c.embed_dim), fan_in=c.enc_hidden)
    store.add("embed.fc2.b", (c.embed_dim,), fan_in=c.enc_hidden)
    store.add("pre.w", (c.n_freq + c.embed_dim, c.pre_hidden), fan_in=c.n_freq + c.embed_dim)
    store.add("pre.b", (c.pre_hidden,), fan_in=c.n_freq + c.embed_dim)
    init_gru_params(store, "gru_fwd", c.pre_hidden, c.gru_hidden)
    init_gru_params(store, "gru_bwd", c.pre_hidden, c.gru_hidden)
    store.add("head.w", (2 * c.gru_hidden, c.n_freq), fan_in=2 * c.gru_hidden)
    store.add("head.b", (c.n_freq,), fan_in=2 * c.gru_hidden)
    return store


def embed_reference(ref_mag: np.ndarray, params: ParamStore) -> Tensor:
    """Unit-norm speaker embedding from a reference magnitude grid [F x T_r]."""
    ref_mag = np.asarray(ref_mag, dtype=np.float64)
    if ref_mag.ndim != 2 or ref_mag.shape[1] < 1:
        raise ValueError(f"reference magnitude must be [F x T_r] with T_r >= 1, got {ref_mag.shape}")
    frames = Tensor(ref_mag.T)
    hidden = dense_forward(frames, params.tensor("embed.fc1.w"), params.tensor("embed.fc1.b")).relu()
    per_frame = dense_forward(hidden, params.tensor("embed.fc2.w"), params.tensor("embed.fc2.b"))
    pooled = per_frame.mean(axis=0)
    norm = ((pooled * pooled).sum() + 1e-12) ** 0.5
    return pooled * norm**-1.0


def _mask_frames(feat: Tensor, batch: int, t_len: int, params: ParamStore) -> Tensor:
    """Mask head over stacked frames [B*T x (F+E)] -> [B*T x F] in (0,1)."""
    pre = dense_forward(feat, params.tensor("pre.w"), params.tensor("pre.b")).relu()
    pre_seq = pre.reshape(batch, t_len, pre.shape[1])
    gru = bigru_forward_batch(pre_seq, params.group("gru_fwd"), params.group("gru_bwd"))
    flat = gru.reshape(batch * t_len, gru.shape[2])
    return dense_forward(flat, params.tensor("head.w"), params.tensor("head.b")).sigmoid()


def _clip_features(mix_mag: np.ndarray, embedding: Tensor) -> Tensor:
    t_len = mix_mag.shape[1]
    frames = Tensor(mix_mag.T)
    tiled = Tensor(np.ones((t_len, 1))) @ embedding.reshape(1, embedding.shape[0])
    return concat([frames, tiled], axis=1)


def predict_mask(mix_mag: np.ndarray, embedding: Tensor, params: ParamStore) -> Tensor:
    """Speaker-dependent mask [F x T] for one mixture magnitude grid."""
    mix_mag = np.asarray(mix_mag, dtype=np.float64)
    f_bins, t_len = mix_mag.shape
    if embedding.shape[0] != params.tensor("embed.fc2.w").shape[1]:
        raise ValueError(
            f"embedding dimension {embedding.shape[0]} does not match network "
            f"({params.tensor('embed.fc2.w').shape[1]})"
        )
    feat = _clip_features(mix_mag, embedding)
    out = _mask_frames(feat, 1, t_len, params)
    return out.transpose()


def mask_for_clip(mix_mag: np.ndarray, ref_mag: np.ndarray, params: ParamStore) -> np.ndarray:
    """Inference-only mask (no graph)."""
    with no_grad():
        return predict_mask(mix_mag, embed_reference(ref_mag, params), params).data


def apply_mask(mix_mag: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Elementwise product; the masked grid never exceeds the input."""
    mix_mag = np.asarray(mix_mag)
    mask = np.asarray(mask)
    if mix_mag.shape != mask.shape:
        raise ValueError(f"mask shape {mask.shape} does not match spectrogram {mix_mag.shape}")
    return mix_mag * mask


def irm_target(target_mag: np.ndarray, interf_mag_scaled: np.ndarray) -> np.ndarray:
    """Ideal ratio mask S/(S + I + eps) from clean component magnitudes."""
    target_mag = np.asarray(target_mag)
    interf_mag_scaled = np.asarray(interf_mag_scaled)
    if target_mag.shape != interf_mag_scaled.shape:
        raise ValueError(
            f"component shapes differ: {target_mag.shape} vs {interf_mag_scaled.shape}"
        )
    return target_mag / (target_mag + interf_mag_scaled + IRM_EPS)


@dataclass
class MaskSample:
    clip_id: str
    mix_mag: np.ndarray   # [F x T]
    ref_mag: np.ndarray   # [F x T_r]
    irm: np.ndarray       # [F x T]


def _batch_loss(samples: list[MaskSample], params: ParamStore) -> Tensor:
    t_len = samples[0].mix_mag.shape[1]
    if any(s.mix_mag.shape[1] != t_len for s in samples):
        raise ValueError("mask batches need equal-length clips")
    feats = []
    targets = []
    for s in samples:
        feats.append(_clip_features(s.mix_mag, embed_reference(s.ref_mag, params)))
        targets.append(s.irm.T)
    stacked = concat(feats, axis=0)
    pred = _mask_frames(stacked, len(samples), t_len, params)
    target = Tensor(np.concatenate(targets, axis=0))
    return mse_loss(pred, target) / target.data.size


def _mean_val_loss(samples: list[MaskSample], params: ParamStore) -> float:
    with no_grad():
        losses = []
        for s in samples:
            mask = predict_mask(s.mix_mag, embed_reference(s.ref_mag, params), params)
            losses.append(float(np.mean((mask.data - s.irm) ** 2)))
    return float(np.mean(losses))


def train_masknet(
    dataset: list[MaskSample],
    hyper: TrainHyper,
    config: MaskNetConfig | None = None,
    resume: tuple[ParamStore, AdamState, int] | None = None,
    epoch_callback: Callable[[int, ParamStore, AdamState, dict], None] | None = None,
) -> TrainResult:
    """Minimize per-bin MSE against the IRM with Adam; deterministic per seed."""
    if not dataset:
        raise ValueError("train_masknet needs a non-empty dataset")
    config = config or MaskNetConfig(n_freq=dataset[0].mix_mag.shape[0])
    if resume is not None:
        params, adam, start_epoch = resume
    else:
        params = init_masknet_params(config, derive_seed(hyper.seed, "mask-init"))
        adam = AdamState.init(params, lr=hyper.lr)
        start_epoch = 0
    train_idx, val_idx = split_train_val(len(dataset), hyper.val_fraction, hyper.max_val_clips)
    history: list[dict] = []
    for epoch in range(start_epoch, hyper.epochs):
        order = epoch_order(hyper.seed, epoch, train_idx)
        epoch_losses = []
        for batch_idx in batches(order, hyper.batch_clips):
            params.zero_grads()
            loss = _batch_loss([dataset[i] for i in batch_idx], params)
            loss.backward()
            adam_step(params, adam)
            epoch_losses.append(loss.item())
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)),
            "val_loss": _mean_val_loss([dataset[i] for i in val_idx], params)
            if val_idx else float("nan"),
        }
        history.append(row)
        if epoch_callback is not None:
            epoch_callback(epoch, params, adam, row)
    return TrainResult(params, adam, history)

"""DoA estimation network: feature assembly, forward pass, training, inference.

Per-frame features are the (masked) channel-1 magnitude plus the spatial
cue. By default the inter-channel phase difference enters as cos/sin pairs,
which encode identical physical states identically across the 2*pi wrap;
the literal concatenation of both raw phase grids is available behind
``phase_mode="literal_phase"``. Both modes are 3F wide.

The network is FC+ReLU+BN, FC+ReLU+BN, BiGRU, FC+ReLU, FC+Sigmoid over 360
output classes. The training loss is the summed squared error between the
sigmoid outputs and the Gaussian-coded target rows, summed over frames and
classes per clip and averaged over the clips of a batch.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import coding
from .dsp import Waveform, magnitude, phase, stft
from .masknet import apply_mask, embed_reference, predict_mask
from .numerics import (
    AdamState,
    ParamStore,
    RunningStats,
    Tensor,
    adam_step,
    bigru_forward_batch,
    dense_forward,
    derive_seed,
    mse_loss,
    no_grad,
)
from .numerics.layers import batchnorm_forward, init_gru_params
from .training import TrainHyper, TrainResult, batches, epoch_order, split_train_val


@dataclass(frozen=True)
class DoaNetConfig:
    n_freq: int = 201
    fc1: int = 512
    fc2: int = 256
    gru_hidden: int = 128
    fc3: int = 256
    n_classes: int = 360
    phase_mode: str = "ipd_cos_sin"  # or "literal_phase"
    sigma_theta: float = 8.0

    def __post_init__(self):
        if self.phase_mode not in ("ipd_cos_sin", "literal_phase"):
            raise ValueError(f"unknown phase_mode {self.phase_mode!r}")
        if min(self.fc1, self.fc2, self.gru_hidden, self.fc3) < 1:
            raise ValueError("layer widths must be >= 1")

    @property
    def feature_dim(self) -> int:
        return 3 * self.n_freq

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DoaNetConfig":
        return cls(**d)


def init_doanet_params(config: DoaNetConfig, seed: int) -> ParamStore:
    store = ParamStore(seed)
    c = config
    d = c.feature_dim
    store.add("fc1.w", (d, c.fc1), fan_in=d)
    store.add("fc1.b", (c.fc1,), fan_in=d)
    store.add_constant("bn1.gamma", np.ones(c.fc1))
    store.add_constant("bn1.beta", np.zeros(c.fc1))
    store.add_buffer("bn1.mean", np.zeros(c.fc1))
    store.add_buffer("bn1.var", np.ones(c.fc1))
    store.add("fc2.w", (c.fc1, c.fc2), fan_in=c.fc1)
    store.add("fc2.b", (c.fc2,), fan_in=c.fc1)
    store.add_constant("bn2.gamma", np.ones(c.fc2))
    store.add_constant("bn2.beta", np.zeros(c.fc2))
    store.add_buffer("bn2.mean", np.zeros(c.fc2))
    store.add_buffer("bn2.var", np.ones(c.fc2))
    init_gru_params(store, "gru_fwd", c.fc2, c.gru_hidden)
    init_gru_params(store, "gru_bwd", c.fc2, c.gru_hidden)
    store.add("fc3.w", (2 * c.gru_hidden, c.fc3), fan_in=2 * c.gru_hidden)
    store.add("fc3.b", (c.fc3,), fan_in=2 * c.gru_hidden)
    store.add("out.w", (c.fc3, c.n_classes), fan_in=c.fc3)
    store.add("out.b", (c.n_classes,), fan_in=c.fc3)
    return store


def assemble_features(masked_mag: np.ndarray, phase_ch1: np.ndarray,
                      phase_ch2: np.ndarray, mode: str = "ipd_cos_sin") -> np.ndarray:
    """Per-frame feature rows [T x 3F] from magnitude and phase grids [F x T]."""
    masked_mag = np.asarray(masked_mag)
    phase_ch1 = np.asarray(phase_ch1)
    phase_ch2 = np.asarray(phase_ch2)
    if not masked_mag.shape == phase_ch1.shape == phase_ch2.shape:
        raise ValueError(
            f"grids must share a shape, got {masked_mag.shape}, "
            f"{phase_ch1.shape}, {phase_ch2.shape}"
        )
    if mode == "ipd_cos_sin":
        ipd = phase_ch1 - phase_ch2
        blocks = (masked_mag, np.cos(ipd), np.sin(ipd))
    elif mode == "literal_phase":
        blocks = (masked_mag, phase_ch1, phase_ch2)
    else:
        raise ValueError(f"unknown phase mode {mode!r}")
    return np.concatenate([b.T for b in blocks], axis=1)


def _forward_stack(x: Tensor, batch: int, t_len: int, params: ParamStore,
                   mode: str) -> tuple[Tensor, Tensor]:
    """Shared forward over stacked frames [B*T x D] -> (posterior, pre_sigmoid)."""
    bn1 = RunningStats(params.buffer("bn1.mean"), params.buffer("bn1.var"))
    bn2 = RunningStats(params.buffer("bn2.mean"), params.buffer("bn2.var"))
    h = dense_forward(x, params.tensor("fc1.w"), params.tensor("fc1.b")).relu()
    h = batchnorm_forward(h, params.tensor("bn1.gamma"), params.tensor("bn1.beta"), bn1, mode)
    h = dense_forward(h, params.tensor("fc2.w"), params.tensor("fc2.b")).relu()
    h = batchnorm_forward(h, params.tensor("bn2.gamma"), params.tensor("bn2.beta"), bn2, mode)
    seq = h.reshape(batch, t_len, h.shape[1])
    gru = bigru_forward_batch(seq, params.group("gru_fwd"), params.group("gru_bwd"))
    flat = gru.reshape(batch * t_len, gru.shape[2])
    h = dense_forward(flat, params.tensor("fc3.w"), params.tensor("fc3.b")).relu()
    logits = dense_forward(h, params.tensor("out.w"), params.tensor("out.b"))
    return logits.sigmoid(), logits


def doanet_forward(features: np.ndarray, params: ParamStore, mode: str = "eval") -> Tensor:
    """Posterior sequence [T x 360] for one clip's feature rows [T x D]."""
    posterior, _ = doanet_forward_full(features, params, mode)
    return posterior


def doanet_forward_full(features: np.ndarray, params: ParamStore,
                        mode: str = "eval") -> tuple[Tensor, Tensor]:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be [T x D], got {features.shape}")
    t_len, dim = features.shape
    if dim != params.tensor("fc1.w").shape[0]:
        raise ValueError(
            f"feature width {dim} does not match network input "
            f"{params.tensor('fc1.w').shape[0]}"
        )
    return _forward_stack(Tensor(features), 1, t_len, params, mode)


@dataclass
class DoaClip:
    """One training/eval clip: 2-channel mixture plus optional reference."""

    clip_id: str
    mixture: np.ndarray          # [2 x N]
    reference: np.ndarray | None  # [N_r] or None for the unmasked ablation
    theta_class: int
    snr_db: float = 0.0
    sample_rate: int = 16000


def clip_features(clip: DoaClip, mask_params: ParamStore | None,
                  config: DoaNetConfig, win: int = 400, hop: int = 160) -> np.ndarray:
    """STFT both channels, apply the (or an identity) mask, assemble features."""
    spec1 = stft(clip.mixture[0], win, hop, clip.sample_rate)
    spec2 = stft(clip.mixture[1], win, hop, clip.sample_rate)
    mag1 = magnitude(spec1)
    if mask_params is not None:
        if clip.reference is None:
            raise ValueError(f"clip {clip.clip_id} has no reference for masked features")
        ref_mag = magnitude(stft(clip.reference, win, hop, clip.sample_rate))
        with no_grad():
            emb = embed_reference(ref_mag, mask_params)
            mask = predict_mask(mag1, emb, mask_params).data
        masked = apply_mask(mag1, mask)
    else:
        masked = mag1
    return assemble_features(masked, phase(spec1), phase(spec2), config.phase_mode)


def _batch_loss(feats: list[np.ndarray], targets: list[np.ndarray],
                params: ParamStore) -> Tensor:
    t_len = feats[0].shape[0]
    if any(f.shape[0] != t_len for f in feats):
        raise ValueError("doanet batches need equal-length clips")
    stacked = Tensor(np.concatenate(feats, axis=0))
    pred, _ = _forward_stack(stacked, len(feats), t_len, params, "train")
    target = Tensor(np.concatenate(targets, axis=0))
    return mse_loss(pred, target) / len(feats)


def train_doanet(
    dataset: list[DoaClip],
    mask_params: ParamStore | None,
    hyper: TrainHyper,
    config: DoaNetConfig | None = None,
    win: int = 400,
    hop: int = 160,
    resume: tuple[ParamStore, AdamState, int] | None = None,
    epoch_callback: Callable[[int, ParamStore, AdamState, dict], None] | None = None,
    log: Callable[[str], None] | None = None,
) -> TrainResult:
    """Train against Gaussian-coded targets; identity mask when mask_params is None."""
    if not dataset:
        raise ValueError("train_doanet needs a non-empty dataset")
    config = config or DoaNetConfig()
    feats = [clip_features(c, mask_params, config, win, hop) for c in dataset]
    targets = [
        coding.encode_posterior(c.theta_class, config.sigma_theta, f.shape[0])
        for c, f in zip(dataset, feats)
    ]
    if resume is not None:
        params, adam, start_epoch = resume
    else:
        params = init_doanet_params(config, derive_seed(hyper.seed, "doa-init"))
        adam = AdamState.init(params, lr=hyper.lr)
        start_epoch = 0
    train_idx, val_idx = split_train_val(len(dataset), hyper.val_fraction, hyper.max_val_clips)
    history: list[dict] = []
    for epoch in range(start_epoch, hyper.epochs):
        order = epoch_order(hyper.seed, epoch, train_idx)
        losses = []
        for batch_idx in batches(order, hyper.batch_clips):
            params.zero_grads()
            loss = _batch_loss([feats[i] for i in batch_idx],
                               [targets[i] for i in batch_idx], params)
            loss.backward()
            adam_step(params, adam)
            losses.append(loss.item())
        val_maes = []
        with no_grad():
            for i in val_idx:
                post, _ = doanet_forward_full(feats[i], params, "eval")
                trace = coding.decode_doa(post.data)
                gt = np.full(len(trace), dataset[i].theta_class)
                val_maes.append(coding.mae(trace, gt))
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_mae": float(np.mean(val_maes)) if val_maes else float("nan"),
        }
        history.append(row)
        if log is not None:
            log(f"epoch {epoch}: train_loss={row['train_loss']:.4f} val_mae={row['val_mae']:.3f}")
        if epoch_callback is not None:
            epoch_callback(epoch, params, adam, row)
    return TrainResult(params, adam, history)


@dataclass
class InferResult:
    posterior: np.ndarray     # [T x 360] sigmoid outputs
    pre_sigmoid: np.ndarray   # [T x 360] activations before the sigmoid
    trace: np.ndarray         # per-frame decoded classes
    clip_doa: int             # argmax of the time-averaged posterior
    mask: np.ndarray | None   # [F x T] when a mask network was applied


def infer(
    mixture: Waveform,
    reference: Waveform | None,
    mask_params: ParamStore | None,
    doa_params: ParamStore,
    config: DoaNetConfig | None = None,
    win: int = 400,
    hop: int = 160,
) -> InferResult:
    """Full pipeline on one clip; pure function of inputs and checkpoints."""
    config = config or DoaNetConfig()
    if mixture.num_channels != 2:
        raise ValueError("infer expects a 2-channel mixture")
    spec1 = stft(mixture.samples[0], win, hop, mixture.sample_rate)
    spec2 = stft(mixture.samples[1], win, hop, mixture.sample_rate)
    mag1 = magnitude(spec1)
    mask = None
    if mask_params is not None:
        if reference is None:
            raise ValueError("masked inference needs a reference utterance")
        ref_mag = magnitude(stft(reference.channel(0), win, hop))
        with no_grad():
            emb = embed_reference(ref_mag, mask_params)
            mask = predict_mask(mag1, emb, mask_params).data
        masked = apply_mask(mag1, mask)
    else:
        masked = mag1
    feats = assemble_features(masked, phase(spec1), phase(spec2), config.phase_mode)
    with no_grad():
        posterior, logits = doanet_forward_full(feats, doa_params, "eval")
    post = posterior.data
    trace = coding.decode_doa(post)
    clip_doa = int(np.argmax(post.mean(axis=0)) + 1)
    return InferResult(post, logits.data, trace, clip_doa, mask)

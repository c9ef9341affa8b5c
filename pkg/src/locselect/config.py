"""Experiment configuration: YAML loading, validation, canonical hashing.

The resolved configuration is hashed (sha256 over a canonical JSON dump) and
stamped into checkpoints and reports, so evaluating with a different
configuration than the one that trained a checkpoint is a hard error.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .acoustics import SceneSampler
from .doanet import DoaNetConfig
from .masknet import MaskNetConfig
from .speakers import CorpusConfig
from .training import TrainHyper


@dataclass(frozen=True)
class StftSettings:
    win: int = 400
    hop: int = 160


@dataclass(frozen=True)
class CodingSettings:
    sigma_theta_deg: float = 8.0
    rho_deg: float = 5.0


@dataclass(frozen=True)
class CorpusSettings:
    n_speakers: int = 40
    clips_per_speaker: int = 12
    clip_seconds: float = 3.0
    min_f1_gap_hz: float = 10.0
    test_clips_per_speaker: int = 4
    noise_floor_db: float = -26.0
    broadband_floor_db: float = -38.0

    def to_corpus_config(self, sample_rate: int) -> CorpusConfig:
        return CorpusConfig(
            n_speakers=self.n_speakers,
            clips_per_speaker=self.clips_per_speaker,
            clip_seconds=self.clip_seconds,
            sample_rate=sample_rate,
            min_f1_gap_hz=self.min_f1_gap_hz,
            noise_floor_db=self.noise_floor_db,
            broadband_floor_db=self.broadband_floor_db,
        )


@dataclass(frozen=True)
class SceneSettings:
    room_min_m: tuple[float, float, float] = (5.0, 4.0, 2.6)
    room_max_m: tuple[float, float, float] = (8.0, 6.5, 3.5)
    beta: float = 0.35
    max_order: int = 1
    mic_spacing_m: float = 0.1
    array_xy_jitter_m: float = 0.3
    array_height_m: tuple[float, float] = (1.2, 1.8)
    src_distance_m: tuple[float, float] = (1.2, 2.8)
    src_height_jitter_m: float = 0.2
    doa_min_deg: float = 10.18
    doa_max_deg: float = 166.96
    min_angle_sep_deg: float = 15.0
    wall_margin_m: float = 0.3
    n_interferers: int = 1
    noise_floor_db: float | None = None  # optional ambient white noise; off by default

    def to_sampler(self, anechoic: bool = False, single_source: bool = False) -> SceneSampler:
        return SceneSampler(
            room_min=tuple(self.room_min_m),
            room_max=tuple(self.room_max_m),
            beta=0.0 if anechoic else self.beta,
            max_order=0 if anechoic else self.max_order,
            mic_spacing=self.mic_spacing_m,
            array_xy_jitter=self.array_xy_jitter_m,
            array_height=tuple(self.array_height_m),
            src_distance=tuple(self.src_distance_m),
            src_height_jitter=self.src_height_jitter_m,
            doa_range=(self.doa_min_deg, self.doa_max_deg),
            min_angle_sep=self.min_angle_sep_deg,
            wall_margin=self.wall_margin_m,
            n_interferers=0 if single_source else self.n_interferers,
        )


@dataclass(frozen=True)
class DatasetSettings:
    train_clips_per_snr: int = 40
    test_clips_per_snr: int = 20
    audit_clips: int = 100
    min_frames_per_cell: int = 1000


@dataclass(frozen=True)
class MaskNetSettings:
    enc_hidden: int = 64
    embed_dim: int = 16
    pre_hidden: int = 64
    gru_hidden: int = 32
    epochs: int = 14
    batch_clips: int = 8
    lr: float = 2.5e-3
    val_fraction: float = 0.1

    def net_config(self, n_freq: int) -> MaskNetConfig:
        return MaskNetConfig(n_freq=n_freq, enc_hidden=self.enc_hidden,
                             embed_dim=self.embed_dim, pre_hidden=self.pre_hidden,
                             gru_hidden=self.gru_hidden)

    def hyper(self, seed: int) -> TrainHyper:
        return TrainHyper(epochs=self.epochs, batch_clips=self.batch_clips,
                          lr=self.lr, seed=seed, val_fraction=self.val_fraction)


@dataclass(frozen=True)
class DoaNetSettings:
    fc1: int = 128
    fc2: int = 64
    gru_hidden: int = 32
    fc3: int = 64
    phase_mode: str = "ipd_cos_sin"
    epochs: int = 18
    batch_clips: int = 8
    lr: float = 2.5e-3
    val_fraction: float = 0.1

    def net_config(self, n_freq: int, sigma_theta: float) -> DoaNetConfig:
        return DoaNetConfig(n_freq=n_freq, fc1=self.fc1, fc2=self.fc2,
                            gru_hidden=self.gru_hidden, fc3=self.fc3,
                            phase_mode=self.phase_mode, sigma_theta=sigma_theta)

    def hyper(self, seed: int) -> TrainHyper:
        return TrainHyper(epochs=self.epochs, batch_clips=self.batch_clips,
                          lr=self.lr, seed=seed, val_fraction=self.val_fraction)


@dataclass(frozen=True)
class ReportSettings:
    sample_clip_snr_db: float = 0.0
    sample_clip_index: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    out_dir: str = "runs/desk"
    seed: int = 1234
    sample_rate: int = 16000
    snr_grid_db: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0)
    stft: StftSettings = field(default_factory=StftSettings)
    coding: CodingSettings = field(default_factory=CodingSettings)
    corpus: CorpusSettings = field(default_factory=CorpusSettings)
    scene: SceneSettings = field(default_factory=SceneSettings)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    masknet: MaskNetSettings = field(default_factory=MaskNetSettings)
    doanet: DoaNetSettings = field(default_factory=DoaNetSettings)
    report: ReportSettings = field(default_factory=ReportSettings)

    def __post_init__(self):
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must be non-empty")
        if self.coding.rho_deg <= 0:
            raise ValueError("rho_deg must be positive")

    @property
    def n_freq(self) -> int:
        return self.stft.win // 2 + 1

    def out_path(self) -> Path:
        return Path(self.out_dir)

    def to_dict(self) -> dict:
        return _as_plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        """Digest of the experiment semantics; out_dir (artifact location) excluded."""
        payload = self.to_dict()
        payload.pop("out_dir")
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


_SECTIONS = {
    "stft": StftSettings,
    "coding": CodingSettings,
    "corpus": CorpusSettings,
    "scene": SceneSettings,
    "dataset": DatasetSettings,
    "masknet": MaskNetSettings,
    "doanet": DoaNetSettings,
    "report": ReportSettings,
}


def _as_plain(obj):
    if isinstance(obj, dict):
        return {k: _as_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_as_plain(v) for v in obj]
    return obj


def _build_section(cls, data: dict, context: str):
    if not isinstance(data, dict):
        raise ValueError(f"config section {context!r} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown keys in config section {context!r}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    data.pop("schema_version", None)
    kwargs = {}
    for key in list(data):
        if key in _SECTIONS:
            kwargs[key] = _build_section(_SECTIONS[key], data.pop(key), key)
    top_fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - top_fields
    if unknown:
        raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")
    for key, value in data.items():
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path, seed: int | None = None,
                out_dir: str | None = None) -> ExperimentConfig:
    """Load a YAML config; optional CLI overrides for seed and out_dir."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if seed is not None:
        data["seed"] = int(seed)
    if out_dir is not None:
        data["out_dir"] = out_dir
    return config_from_dict(data)

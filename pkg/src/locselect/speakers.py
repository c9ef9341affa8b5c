"""Parametric synthetic speakers: harmonic source, formant filter, tilt.

Each speaker is a stable spectral identity (three formant resonators plus a
spectral tilt) excited by a pulse train whose fundamental wanders inside the
speaker's range. Utterances are amplitude-modulated into voiced/paused
segments and carry a low-level aspiration noise floor so every band has
coherent energy. Everything is deterministic per (model, utterance seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .dsp import Waveform
from .numerics import derive_seed


@dataclass(frozen=True)
class SpeakerModel:
    speaker_id: int
    f0_range: tuple[float, float]                  # Hz
    formants: tuple[tuple[float, float], ...]      # (center Hz, bandwidth Hz) x3
    tilt_db_oct: float
    seed: int

    def __post_init__(self):
        lo, hi = self.f0_range
        if not (80.0 <= lo < hi <= 400.0):
            raise ValueError(f"f0 range must sit inside [80, 400] Hz, got {self.f0_range}")
        centers = [f for f, _ in self.formants]
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ValueError(f"formants must be strictly increasing, got {centers}")


@dataclass(frozen=True)
class CorpusConfig:
    n_speakers: int = 40
    clips_per_speaker: int = 12
    clip_seconds: float = 3.0
    sample_rate: int = 16000
    min_f1_gap_hz: float = 10.0
    f1_range: tuple[float, float] = (280.0, 880.0)
    noise_floor_db: float = -26.0
    broadband_floor_db: float = -38.0


def _resonator_coeffs(freq: float, bandwidth: float, fs: int):
    """Two-pole resonator; numerator scaled for ~unit gain at resonance."""
    r = math.exp(-math.pi * bandwidth / fs)
    w = 2.0 * math.pi * freq / fs
    a = np.array([1.0, -2.0 * r * math.cos(w), r * r])
    z = np.exp(-1j * w)
    gain = abs(a[0] + a[1] * z + a[2] * z * z)
    return np.array([gain]), a


def _apply_tilt(signal: np.ndarray, tilt_db_oct: float, fs: int,
                ref_hz: float = 500.0) -> np.ndarray:
    """Frequency-domain spectral tilt of tilt_db_oct per octave above/below ref."""
    spec = np.fft.rfft(signal)
    freqs = np.fft.rfftfreq(len(signal), 1.0 / fs)
    octaves = np.log2(np.maximum(freqs, 50.0) / ref_hz)
    spec *= 10.0 ** (tilt_db_oct * octaves / 20.0)
    return np.fft.irfft(spec, n=len(signal))


def synth_utterance(model: SpeakerModel, duration: float, utterance_seed: int,
                    fs: int = 16000, noise_floor_db: float = -26.0,
                    broadband_floor_db: float = -38.0) -> Waveform:
    """Render one utterance; deterministic per (model, utterance_seed).

    ``broadband_floor_db`` (relative to the voiced signal's RMS) adds a flat
    noise floor after the formant/tilt chain, mimicking the wideband floor of
    recorded speech: without it the band above the formants is tens of dB
    down and carries no usable inter-channel phase.
    """
    if duration < 0.5:
        raise ValueError(f"utterances must be at least 0.5 s, got {duration}")
    rng = np.random.default_rng(np.random.PCG64(derive_seed(model.seed, f"utt-{utterance_seed}")))
    n = int(round(duration * fs))

    # f0 contour: multiplicative random walk at 10 ms steps, clamped to range
    lo, hi = model.f0_range
    steps = n // 160 + 2
    f0 = np.empty(steps)
    f0[0] = rng.uniform(lo, hi)
    for i in range(1, steps):
        f0[i] = min(max(f0[i - 1] * math.exp(rng.normal(0.0, 0.03)), lo), hi)
    f0_per_sample = np.interp(np.arange(n), np.arange(steps) * 160, f0)

    # pulse train by phase accumulation
    phase = np.cumsum(f0_per_sample / fs)
    excitation = np.zeros(n)
    excitation[np.flatnonzero(np.diff(np.floor(phase)) > 0)] = 1.0

    # voiced/paused envelope with 20 ms raised-cosine edges
    envelope = np.zeros(n)
    ramp = int(0.02 * fs)
    edge = 0.5 * (1 - np.cos(np.linspace(0, math.pi, ramp)))
    pos = 0
    while pos < n:
        voiced = int(rng.uniform(0.3, 0.7) * fs)
        seg = np.ones(min(voiced, n - pos))
        if len(seg) > 2 * ramp:
            seg[:ramp] = edge
            seg[-ramp:] = edge[::-1]
        envelope[pos:pos + len(seg)] = seg
        pos += voiced + int(rng.uniform(0.08, 0.22) * fs)

    noise = rng.normal(size=n) * 10.0 ** (noise_floor_db / 20.0)
    source = (excitation + noise) * envelope

    for freq, bandwidth in model.formants:
        b, a = _resonator_coeffs(freq, bandwidth, fs)
        source = lfilter(b, a, source)
    source = _apply_tilt(source, model.tilt_db_oct, fs)

    rms = float(np.sqrt(np.mean(source**2)))
    if rms > 0:
        source = source + rng.normal(size=n) * rms * 10.0 ** (broadband_floor_db / 20.0)
    peak = np.max(np.abs(source))
    if peak > 0:
        source = source / peak * 0.9
    return Waveform(source, fs)


def sample_speakers(config: CorpusConfig, seed: int) -> list[SpeakerModel]:
    """Draw speaker models with a minimum pairwise first-formant gap."""
    if config.n_speakers < 2:
        raise ValueError("need at least 2 speakers")
    rng = np.random.default_rng(np.random.PCG64(derive_seed(seed, "speakers")))
    taken_f1: list[float] = []
    models = []
    for idx in range(config.n_speakers):
        for attempt in range(2000):
            f1 = rng.uniform(*config.f1_range)
            if all(abs(f1 - other) >= config.min_f1_gap_hz for other in taken_f1):
                break
        else:
            raise RuntimeError("formant separation constraint infeasible for config")
        taken_f1.append(f1)
        f2 = f1 + rng.uniform(500.0, 1300.0)
        f3 = f2 + rng.uniform(600.0, 1200.0)
        f0_center = rng.uniform(100.0, 260.0)
        models.append(SpeakerModel(
            speaker_id=idx,
            f0_range=(f0_center * 0.88, f0_center * 1.12),
            formants=(
                (f1, rng.uniform(60.0, 110.0)),
                (f2, rng.uniform(80.0, 140.0)),
                (f3, rng.uniform(100.0, 180.0)),
            ),
            tilt_db_oct=rng.uniform(-13.0, -6.0),
            seed=derive_seed(seed, f"speaker-{idx}"),
        ))
    return models


@dataclass(frozen=True)
class UtteranceSpec:
    speaker_id: int
    utt_id: str
    seed: int
    duration_s: float
    wav_path: str


@dataclass
class CorpusManifest:
    config: CorpusConfig
    speakers: list[SpeakerModel]
    utterances: list[UtteranceSpec]

    def by_speaker(self, speaker_id: int) -> list[UtteranceSpec]:
        return [u for u in self.utterances if u.speaker_id == speaker_id]


def build_corpus(config: CorpusConfig, seed: int) -> CorpusManifest:
    """Deterministic corpus manifest; WAV rendering happens in the pipeline."""
    speakers = sample_speakers(config, seed)
    utterances = []
    counter = 0
    for model in speakers:
        for clip in range(config.clips_per_speaker):
            utt_id = f"spk{model.speaker_id:03d}_utt{clip:03d}"
            utterances.append(UtteranceSpec(
                speaker_id=model.speaker_id,
                utt_id=utt_id,
                seed=counter,  # unique across the corpus by construction
                duration_s=config.clip_seconds,
                wav_path=f"wavs/{utt_id}.wav",
            ))
            counter += 1
    return CorpusManifest(config, speakers, utterances)


def long_term_spectrum(samples: np.ndarray, fs: int, nfft: int = 512) -> np.ndarray:
    """Averaged magnitude-squared spectrum over Hann-windowed frames."""
    window = np.hanning(nfft)
    n_frames = len(samples) // nfft
    acc = np.zeros(nfft // 2 + 1)
    for t in range(n_frames):
        frame = samples[t * nfft:(t + 1) * nfft]
        acc += np.abs(np.fft.rfft(window * frame)) ** 2
    return acc / max(n_frames, 1)

"""STFT frontend and WAV I/O.

Framing is uncentered and unpadded: frame t covers samples
[t*hop, t*hop + win), so T = floor((len - win)/hop) + 1 and every frame lies
fully inside the signal. The analysis window is the symmetric Hann window.
No inverse transform is provided; the pipeline consumes spectrograms only.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile


@dataclass(frozen=True)
class Waveform:
    """Float64 audio; ``samples`` is [N] for mono or [C x N] channels-first."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.ndim not in (1, 2):
            raise ValueError(f"samples must be 1-D or 2-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def num_channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[-1]

    def channel(self, index: int) -> "Waveform":
        if self.samples.ndim == 1:
            if index != 0:
                raise IndexError("mono waveform has only channel 0")
            return self
        return Waveform(self.samples[index], self.sample_rate)


@dataclass
class Spectrogram:
    """Complex time-frequency grid [F x T] with F = win//2 + 1."""

    frames: np.ndarray
    win: int
    hop: int
    sample_rate: int = 16000

    def __post_init__(self):
        if self.frames.shape[0] != self.win // 2 + 1:
            raise ValueError(
                f"bin count {self.frames.shape[0]} inconsistent with win={self.win}"
            )

    @property
    def n_bins(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency of each bin in Hz."""
        return np.arange(self.n_bins) * self.sample_rate / self.win


def hann_window(n: int) -> np.ndarray:
    """Symmetric Hann: w[k] = 0.5*(1 - cos(2*pi*k/(n-1)))."""
    if n < 2:
        raise ValueError(f"hann_window needs n >= 2, got {n}")
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1)))


def stft(x: Waveform | np.ndarray, win: int = 400, hop: int = 160,
         sample_rate: int | None = None) -> Spectrogram:
    """Hann-windowed one-sided DFT of a mono signal."""
    if isinstance(x, Waveform):
        if x.num_channels != 1:
            raise ValueError("stft transforms one channel at a time")
        samples = x.samples
        rate = x.sample_rate
    else:
        samples = np.asarray(x, dtype=np.float64)
        rate = sample_rate or 16000
    n = samples.shape[0]
    if n < win:
        raise ValueError(f"signal of {n} samples is shorter than one window ({win})")
    n_frames = (n - win) // hop + 1
    window = hann_window(win)
    frames = np.empty((win // 2 + 1, n_frames), dtype=np.complex128)
    for t in range(n_frames):
        start = t * hop
        frames[:, t] = np.fft.rfft(window * samples[start:start + win])
    return Spectrogram(frames, win, hop, rate)


def magnitude(spec: Spectrogram) -> np.ndarray:
    return np.abs(spec.frames)


def phase(spec: Spectrogram) -> np.ndarray:
    """Per-bin argument in (-pi, pi]."""
    return np.angle(spec.frames)


# -- WAV I/O: PCM 16-bit and 32-bit float, mono or 2-channel, little-endian --


def read_wav(path: str | Path, expected_rate: int | None = None) -> Waveform:
    """Read a WAV file; sample-rate mismatch is a hard error (no resampling)."""
    rate, data = wavfile.read(path)
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} != expected {expected_rate}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    if samples.ndim == 2:  # wavfile gives [N x C]
        samples = samples.T
    return Waveform(samples, int(rate))


def write_wav(path: str | Path, wave: Waveform, fmt: str = "float32") -> None:
    """Write mono or 2-channel WAV as 32-bit float (default) or PCM 16-bit."""
    samples = wave.samples
    if samples.ndim == 2:
        if samples.shape[0] > 2:
            raise ValueError(f"at most 2 channels supported, got {samples.shape[0]}")
        samples = samples.T
    if fmt == "float32":
        data = samples.astype(np.float32)
    elif fmt == "pcm16":
        data = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, wave.sample_rate, data)

"""Scene simulation: image-source RIRs, 2-microphone rendering, SNR mixing.

Conventions used throughout (and by the GCC-PHAT oracle in ``baselines``):

- The array axis runs from mic1 to mic2; DoA is the angle in [0, 180] degrees
  between that axis and the source direction, projected onto the horizontal
  plane. 0 degrees = source on the axis beyond mic2.
- "Inter-channel delay" means (t_arrival_mic1 - t_arrival_mic2); in the far
  field it equals d*cos(theta)/c, so a source beyond mic2 gives +d/c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .dsp import Waveform

SPEED_OF_SOUND = 343.0

# Peterson-style fractional delay: 81-tap Hann-windowed sinc
SINC_HALF_TAPS = 40


@dataclass(frozen=True)
class Room:
    """Shoebox room with a uniform wall reflection coefficient."""

    dimensions: tuple[float, float, float]
    beta: float = 0.0
    max_order: int = 0
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        if any(d <= 0 for d in self.dimensions):
            raise ValueError(f"room dimensions must be positive, got {self.dimensions}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"reflection coefficient must be in [0, 1), got {self.beta}")
        if self.max_order < 0 or self.max_order > 6:
            raise ValueError(f"max_order must be in 0..6, got {self.max_order}")

    def contains(self, point: np.ndarray, margin: float = 0.0) -> bool:
        return all(margin < p < d - margin for p, d in zip(point, self.dimensions))


@dataclass(frozen=True)
class ArrayGeometry:
    """Two omnidirectional microphones."""

    mic1: np.ndarray
    mic2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mic1", np.asarray(self.mic1, dtype=np.float64))
        object.__setattr__(self, "mic2", np.asarray(self.mic2, dtype=np.float64))
        if self.spacing <= 0:
            raise ValueError("microphones must not coincide")

    @property
    def spacing(self) -> float:
        return float(np.linalg.norm(self.mic2 - self.mic1))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.mic1 + self.mic2)


def doa_from_geometry(array: ArrayGeometry, src: np.ndarray) -> float:
    """Azimuth of the source off the mic1->mic2 axis, degrees in [0, 180]."""
    src = np.asarray(src, dtype=np.float64)
    axis = (array.mic2 - array.mic1)[:2]
    vec = (src - array.center)[:2]
    axis_norm = np.linalg.norm(axis)
    vec_norm = np.linalg.norm(vec)
    if vec_norm < 1e-12:
        raise ValueError("source is on the array's vertical axis; azimuth undefined")
    if axis_norm < 1e-12:
        raise ValueError("array axis has no horizontal projection")
    cos_theta = float(np.dot(axis, vec) / (axis_norm * vec_norm))
    return math.degrees(math.acos(np.clip(cos_theta, -1.0, 1.0)))


def image_sources(room: Room, src: np.ndarray, mic: np.ndarray,
                  max_order: int | None = None) -> list[tuple[float, float, int]]:
    """Enumerate image sources up to the reflection order.

    Returns (delay_seconds, amplitude, order) per image, where amplitude is
    beta^order / (4*pi*r). Images are the standard shoebox reflections: per
    axis the coordinate is (1-2q)*s + 2*n*L with q in {0,1}, n integer, and
    the axis contributes |n - q| + |n| reflections.
    """
    src = np.asarray(src, dtype=np.float64)
    mic = np.asarray(mic, dtype=np.float64)
    order_cap = room.max_order if max_order is None else max_order
    if not room.contains(src) or not room.contains(mic):
        raise ValueError("source and microphone must lie strictly inside the room")
    if np.linalg.norm(src - mic) < 1e-9:
        raise ValueError("source and microphone coincide")
    dims = room.dimensions
    n_range = range(-(order_cap + 1), order_cap + 2)
    out = []
    for qx in (0, 1):
        for qy in (0, 1):
            for qz in (0, 1):
                q = (qx, qy, qz)
                for nx in n_range:
                    rx = abs(nx - qx) + abs(nx)
                    if rx > order_cap:
                        continue
                    for ny in n_range:
                        ry = abs(ny - qy) + abs(ny)
                        if rx + ry > order_cap:
                            continue
                        for nz in n_range:
                            order = rx + ry + abs(nz - qz) + abs(nz)
                            if order > order_cap:
                                continue
                            pos = np.array([
                                (1 - 2 * q[i]) * src[i] + 2 * (nx, ny, nz)[i] * dims[i]
                                for i in range(3)
                            ])
                            r = float(np.linalg.norm(pos - mic))
                            amp = room.beta**order / (4.0 * math.pi * r)
                            out.append((r / room.speed_of_sound, amp, order))
    out.sort()
    return out


def image_count(max_order: int) -> int:
    """Closed-form count of shoebox images with at most ``max_order`` bounces.

    Per axis there is 1 image with 0 reflections and 2 with each count >= 1;
    the 3-D count convolves the three axes.
    """
    def per_axis(k):
        return 1 if k == 0 else 2

    total = 0
    for kx in range(max_order + 1):
        for ky in range(max_order + 1 - kx):
            for kz in range(max_order + 1 - kx - ky):
                total += per_axis(kx) * per_axis(ky) * per_axis(kz)
    return total


def simulate_rir(room: Room, src: np.ndarray, mic: np.ndarray,
                 fs: int = 16000) -> np.ndarray:
    """Image-source impulse response with windowed-sinc fractional delays."""
    images = image_sources(room, src, mic)
    max_delay = images[-1][0]
    length = int(math.ceil(max_delay * fs)) + SINC_HALF_TAPS + 2
    h = np.zeros(length)
    for delay_s, amp, _ in images:
        center = delay_s * fs
        n0 = int(math.floor(center))
        k = np.arange(n0 - SINC_HALF_TAPS, n0 + SINC_HALF_TAPS + 1)
        t = k - center
        window = 0.5 * (1.0 + np.cos(math.pi * t / (SINC_HALF_TAPS + 1)))
        taps = amp * window * np.sinc(t)
        valid = (k >= 0) & (k < length)
        h[k[valid]] += taps[valid]
    return h


def render(src_signal: Waveform, rir_pair: tuple[np.ndarray, np.ndarray]) -> Waveform:
    """Convolve a mono source with each channel's RIR; truncate to source length."""
    if src_signal.num_channels != 1:
        raise ValueError("render expects a mono source")
    x = src_signal.samples
    if x.size == 0:
        raise ValueError("render of an empty signal")
    n = x.shape[0]
    channels = [fftconvolve(x, h)[:n] for h in rir_pair]
    return Waveform(np.stack(channels), src_signal.sample_rate)


def snr_of(s: np.ndarray | Waveform, n: np.ndarray | Waveform) -> float:
    """10*log10(sum(s^2) / sum(n^2)), energies summed over all channels."""
    s = s.samples if isinstance(s, Waveform) else np.asarray(s)
    n = n.samples if isinstance(n, Waveform) else np.asarray(n)
    es = float(np.sum(s**2))
    en = float(np.sum(n**2))
    if es <= 0.0 or en <= 0.0:
        raise ValueError("snr_of needs both operands to carry energy")
    return 10.0 * math.log10(es / en)


@dataclass
class MixResult:
    mixture: np.ndarray        # [2 x N], peak-normalized
    alpha: float               # interferer scale before normalization
    gain: float                # common peak-normalization gain
    target_scaled: np.ndarray  # gain * target
    interf_scaled: np.ndarray  # gain * alpha * interferer


def mix_at_snr(target: np.ndarray, interferer: np.ndarray, snr_db: float,
               peak: float = 0.9) -> MixResult:
    """Scale the interferer to the requested SNR, sum, peak-normalize.

    alpha = sqrt(P_target / (P_interferer * 10^(snr/10))) over channel-summed
    energies; shorter input is zero-padded. The returned components carry the
    same normalization gain as the mixture, so ideal-ratio-mask targets can
    be computed downstream.
    """
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    interferer = np.atleast_2d(np.asarray(interferer, dtype=np.float64))
    n = max(target.shape[1], interferer.shape[1])
    target = np.pad(target, ((0, 0), (0, n - target.shape[1])))
    interferer = np.pad(interferer, ((0, 0), (0, n - interferer.shape[1])))
    p_s = float(np.sum(target**2))
    p_n = float(np.sum(interferer**2))
    if p_s <= 0.0 or p_n <= 0.0:
        raise ValueError("mix_at_snr needs non-silent target and interferer")
    alpha = math.sqrt(p_s / (p_n * 10.0 ** (snr_db / 10.0)))
    pre = target + alpha * interferer
    peak_val = float(np.max(np.abs(pre)))
    if peak_val == 0.0:
        raise ValueError("mixture is identically zero")
    # divide by the peak first so the loudest sample lands on `peak` exactly
    return MixResult(
        mixture=pre / peak_val * peak,
        alpha=alpha,
        gain=peak / peak_val,
        target_scaled=target / peak_val * peak,
        interf_scaled=alpha * interferer / peak_val * peak,
    )


def peak_normalize(x: np.ndarray, peak: float = 0.9) -> tuple[np.ndarray, float]:
    """Scale so max |sample| == peak exactly; no-op (gain 1) on silence."""
    x = np.asarray(x, dtype=np.float64)
    m = float(np.max(np.abs(x)))
    if m == 0.0:
        return x.copy(), 1.0
    return x / m * peak, peak / m


@dataclass
class SceneSampler:
    """Configured ranges for random scene generation."""

    room_min: tuple[float, float, float] = (5.0, 4.0, 2.6)
    room_max: tuple[float, float, float] = (8.0, 6.5, 3.5)
    beta: float = 0.35
    max_order: int = 1
    mic_spacing: float = 0.1
    array_xy_jitter: float = 0.3
    array_height: tuple[float, float] = (1.2, 1.8)
    src_distance: tuple[float, float] = (1.2, 2.8)
    src_height_jitter: float = 0.2
    doa_range: tuple[float, float] = (10.18, 166.96)
    min_angle_sep: float = 15.0
    wall_margin: float = 0.3
    n_interferers: int = 1
    max_attempts: int = 1000


@dataclass
class Scene:
    """One simulated clip's geometry. theta_t is always recomputed."""

    room: Room
    array: ArrayGeometry
    target_pos: np.ndarray
    interferer_positions: list[np.ndarray] = field(default_factory=list)
    snr_db: float = 0.0
    seed: int = 0

    @property
    def theta_t(self) -> float:
        return doa_from_geometry(self.array, self.target_pos)

    def interferer_doas(self) -> list[float]:
        return [doa_from_geometry(self.array, p) for p in self.interferer_positions]

    def rir_pair(self, src: np.ndarray, fs: int = 16000) -> tuple[np.ndarray, np.ndarray]:
        return (simulate_rir(self.room, src, self.array.mic1, fs),
                simulate_rir(self.room, src, self.array.mic2, fs))


def sample_scene(config: SceneSampler, seed: int, snr_db: float = 0.0) -> Scene:
    """Draw a scene from the configured ranges; deterministic per seed.

    Source placements whose DoA falls outside ``doa_range`` (or within
    ``min_angle_sep`` of an already-placed source) are rejected; more than
    ``max_attempts`` consecutive rejections raise.
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    dims = tuple(rng.uniform(lo, hi) for lo, hi in zip(config.room_min, config.room_max))
    room = Room(dims, beta=config.beta, max_order=config.max_order)

    cx = dims[0] / 2 + rng.uniform(-config.array_xy_jitter, config.array_xy_jitter)
    cy = dims[1] / 2 + rng.uniform(-config.array_xy_jitter, config.array_xy_jitter)
    cz = rng.uniform(*config.array_height)
    half = config.mic_spacing / 2
    array = ArrayGeometry(np.array([cx - half, cy, cz]), np.array([cx + half, cy, cz]))
    if not (room.contains(array.mic1, config.wall_margin)
            and room.contains(array.mic2, config.wall_margin)):
        raise ValueError("array placement infeasible for the configured room ranges")

    def draw_source(taken_doas: list[float]) -> np.ndarray:
        for _ in range(config.max_attempts):
            azimuth = rng.uniform(0.0, 2.0 * math.pi)
            distance = rng.uniform(*config.src_distance)
            dz = rng.uniform(-config.src_height_jitter, config.src_height_jitter)
            pos = array.center + np.array(
                [distance * math.cos(azimuth), distance * math.sin(azimuth), dz]
            )
            if not room.contains(pos, config.wall_margin):
                continue
            doa = doa_from_geometry(array, pos)
            if not config.doa_range[0] <= doa <= config.doa_range[1]:
                continue
            if any(abs(doa - other) < config.min_angle_sep for other in taken_doas):
                continue
            return pos
        raise RuntimeError(
            f"scene sampling failed after {config.max_attempts} consecutive rejections"
        )

    target = draw_source([])
    placed = [doa_from_geometry(array, target)]
    interferers = []
    for _ in range(config.n_interferers):
        pos = draw_source(placed)
        placed.append(doa_from_geometry(array, pos))
        interferers.append(pos)
    return Scene(room, array, target, interferers, snr_db=snr_db, seed=seed)

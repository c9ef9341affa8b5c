"""Classical GCC-PHAT oracle: whitened cross-correlation and TDOA geometry.

Lag sign convention: ``gcc_phat(x1, x2, L).peak_lag`` is positive when x2
lags x1 (x2 = x1 delayed by +lag samples), matching a brute-force
time-domain cross-correlation sum_t x1(t) * x2(t + lag).

For the DoA inversion the relevant TDOA is tau = t_arrival_mic1 -
t_arrival_mic2 = -peak_lag / fs, and theta = arccos(c * tau / d): a source
on the axis beyond mic2 arrives at mic2 first, giving tau = +d/c and theta
= 0 degrees (see ``acoustics``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .acoustics import SPEED_OF_SOUND


@dataclass
class GccResult:
    lags: np.ndarray     # integer lags -L..L
    values: np.ndarray   # whitened correlation at each lag
    peak_lag: int
    peak_value: float


def gcc_phat(x1: np.ndarray, x2: np.ndarray, max_lag: int) -> GccResult:
    """Phase-transform cross-correlation at integer lags in [-L, L].

    The cross-spectrum is whitened to unit modulus (1e-12 floor), so the
    peak location is invariant to scaling either input.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise ValueError(f"gcc_phat needs equal-length 1-D inputs, got {x1.shape} and {x2.shape}")
    if len(x1) < 2 * max_lag:
        raise ValueError(f"signals of {len(x1)} samples too short for max_lag={max_lag}")
    if not np.any(x1) or not np.any(x2):
        raise ValueError("gcc_phat on an all-zero signal")
    n = len(x1) + len(x2)
    spec1 = np.fft.rfft(x1, n=n)
    spec2 = np.fft.rfft(x2, n=n)
    cross = np.conj(spec1) * spec2  # peak of irfft lands at the delay of x2
    cross /= np.maximum(np.abs(cross), 1e-12)
    cc = np.fft.irfft(cross, n=n)
    values = np.concatenate([cc[-max_lag:], cc[: max_lag + 1]])
    lags = np.arange(-max_lag, max_lag + 1)
    peak_idx = int(np.argmax(values))
    return GccResult(lags, values, int(lags[peak_idx]), float(values[peak_idx]))


def tdoa_to_doa(tau: float, d: float, c: float = SPEED_OF_SOUND,
                slack_s: float = 1.0 / 16000) -> float:
    """Far-field inversion theta = arccos(c * tau / d), degrees in [0, 180].

    |tau| may exceed the physical bound d/c by up to ``slack_s`` (one sample
    of lag quantization); it is then clamped with a warning. Beyond that the
    call is an error.
    """
    limit = d / c
    if abs(tau) > limit + slack_s:
        raise ValueError(f"TDOA {tau:.3e}s exceeds physical bound {limit:.3e}s beyond slack")
    if abs(tau) > limit:
        warnings.warn(f"TDOA {tau:.3e}s clamped to +-d/c", stacklevel=2)
        tau = math.copysign(limit, tau)
    return math.degrees(math.acos(c * tau / d))


def estimate_doa_gcc(ch1: np.ndarray, ch2: np.ndarray, d: float, fs: int,
                     c: float = SPEED_OF_SOUND) -> float:
    """GCC-PHAT DoA estimate for one 2-channel clip."""
    max_lag = int(math.ceil(d * fs / c)) + 1
    result = gcc_phat(ch1, ch2, max_lag)
    tau = -result.peak_lag / fs  # t1 - t2
    return tdoa_to_doa(tau, d, c, slack_s=1.0 / fs)


def lag_quantization_bound_deg(theta_deg: float, d: float, fs: int,
                               c: float = SPEED_OF_SOUND) -> float:
    """Worst-case |theta_hat - theta| from one sample of lag error.

    The true delay k = d*cos(theta)/c*fs lands between integer lags; any lag
    within one sample of k maps through arccos to an angle, and the bound is
    the largest deviation among those candidates (computed per scene).
    """
    k_true = d * math.cos(math.radians(theta_deg)) / c * fs
    bound = 0.0
    for k in range(int(math.ceil(k_true - 1.0)), int(math.floor(k_true + 1.0)) + 1):
        u = max(-1.0, min(1.0, k * c / (d * fs)))
        theta_k = math.degrees(math.acos(u))
        bound = max(bound, abs(theta_k - theta_deg))
    return bound

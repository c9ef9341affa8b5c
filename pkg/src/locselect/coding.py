"""Posterior coding of DoA labels, argmax decoding, and the MAE/ACC metrics.

Angles are the 360 integer classes {1..360} degrees. All distances are
circular: dist(a, b) = min(|a-b|, 360-|a-b|), making classes 1 and 360
adjacent. Target rows are exp(-dist/sigma) with no normalizing prefix, so
the peak value at the ground-truth class is exactly 1.
"""

from __future__ import annotations

import numpy as np

N_CLASSES = 360
_THETAS = np.arange(1, N_CLASSES + 1)


def circular_distance(a, b):
    """Elementwise circular distance in degrees on the 360-degree circle."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return np.minimum(d, 360.0 - d)


def to_class(theta_deg: float) -> int:
    """Nearest integer class in {1..360} for a continuous angle."""
    c = int(np.floor(theta_deg + 0.5))
    c = ((c - 1) % 360) + 1
    return c


def encode_posterior(theta_t: int, sigma_theta: float, n_frames: int) -> np.ndarray:
    """[T x 360] target posterior, each row exp(-dist(theta, theta_t)/sigma)."""
    if sigma_theta <= 0:
        raise ValueError(f"sigma_theta must be positive, got {sigma_theta}")
    if not 1 <= theta_t <= N_CLASSES:
        raise ValueError(f"theta_t must be an integer class in 1..360, got {theta_t}")
    row = np.exp(-circular_distance(_THETAS, theta_t) / sigma_theta)
    return np.tile(row, (n_frames, 1))


def decode_doa(posterior: np.ndarray) -> np.ndarray:
    """Per-frame argmax class; ties break to the smallest angle."""
    posterior = np.asarray(posterior)
    return np.argmax(posterior, axis=1) + 1  # numpy argmax takes the first max


def mae(est: np.ndarray, gt: np.ndarray) -> float:
    """Mean circular distance in degrees; traces must have equal length."""
    est = np.asarray(est)
    gt = np.asarray(gt)
    if est.shape != gt.shape:
        raise ValueError(f"trace length mismatch: {est.shape} vs {gt.shape}")
    if est.size == 0:
        raise ValueError("mae of an empty trace")
    return float(np.mean(circular_distance(est, gt)))


def acc(est: np.ndarray, gt: np.ndarray, rho: float = 5.0) -> float:
    """Fraction of frames within rho degrees (boundary inclusive)."""
    est = np.asarray(est)
    gt = np.asarray(gt)
    if est.shape != gt.shape:
        raise ValueError(f"trace length mismatch: {est.shape} vs {gt.shape}")
    if est.size == 0:
        raise ValueError("acc of an empty trace")
    return float(np.mean(circular_distance(est, gt) <= rho))

"""GCC-PHAT oracle tests against brute-force normalized cross-correlation."""

import math

import numpy as np
import pytest

from locselect.acoustics import SceneSampler, render, sample_scene
from locselect.baselines import (
    estimate_doa_gcc,
    gcc_phat,
    lag_quantization_bound_deg,
    tdoa_to_doa,
)
from locselect.dsp import Waveform

FS = 16000
C = 343.0


def brute_force_ncc_peak(x1, x2, max_lag):
    """Oracle: normalized time-domain cross-correlation argmax lag."""
    n = len(x1)
    best_lag, best = 0, -np.inf
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            a, b = x1[: n - lag], x2[lag:]
        else:
            a, b = x1[-lag:], x2[: n + lag]
        denom = np.linalg.norm(a) * np.linalg.norm(b)
        v = np.dot(a, b) / denom if denom > 0 else 0.0
        if v > best:
            best_lag, best = lag, v
    return best_lag


class TestGccPhat:
    def test_delayed_white_noise(self):
        rng = np.random.default_rng(0)
        x1 = rng.normal(size=2000)
        delay = 5
        x2 = np.concatenate([np.zeros(delay), x1[:-delay]])
        result = gcc_phat(x1, x2, 20)
        assert result.peak_lag == 5 == brute_force_ncc_peak(x1, x2, 20)

    def test_identical_inputs_zero_lag(self):
        x = np.random.default_rng(1).normal(size=1000)
        assert gcc_phat(x, x, 10).peak_lag == 0

    def test_swap_negates_lag(self):
        rng = np.random.default_rng(2)
        x1 = rng.normal(size=1500)
        x2 = np.concatenate([np.zeros(3), x1[:-3]])
        assert gcc_phat(x1, x2, 10).peak_lag == -gcc_phat(x2, x1, 10).peak_lag

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        x1 = rng.normal(size=1200)
        x2 = np.concatenate([np.zeros(4), x1[:-4]])
        base = gcc_phat(x1, x2, 10).peak_lag
        assert gcc_phat(7.3 * x1, x2, 10).peak_lag == base
        assert gcc_phat(x1, 0.01 * x2, 10).peak_lag == base

    def test_input_validation(self):
        with pytest.raises(ValueError):
            gcc_phat(np.zeros(100), np.ones(100), 5)
        with pytest.raises(ValueError):
            gcc_phat(np.ones(10), np.ones(11), 2)
        with pytest.raises(ValueError):
            gcc_phat(np.ones(10), np.ones(10), 8)

    def test_lag_window_shape(self):
        x = np.random.default_rng(4).normal(size=600)
        res = gcc_phat(x, x, 7)
        assert len(res.values) == 15
        assert res.lags[0] == -7 and res.lags[-1] == 7


class TestTdoaToDoa:
    def test_zero_tau_broadside(self):
        assert tdoa_to_doa(0.0, 0.1) == pytest.approx(90.0)

    def test_positive_bound_zero_degrees(self):
        assert tdoa_to_doa(0.1 / C, 0.1) == pytest.approx(0.0, abs=1e-5)

    def test_negative_bound_180(self):
        assert tdoa_to_doa(-0.1 / C, 0.1) == pytest.approx(180.0)

    def test_clamp_with_warning(self):
        with pytest.warns(UserWarning):
            theta = tdoa_to_doa(0.1 / C + 0.5 / FS, 0.1, slack_s=1.0 / FS)
        assert theta == pytest.approx(0.0, abs=1e-5)

    def test_beyond_slack_is_error(self):
        with pytest.raises(ValueError):
            tdoa_to_doa(0.1 / C + 2.0 / FS, 0.1, slack_s=1.0 / FS)


class TestDoaRecovery:
    def test_anechoic_scenes_within_quantization_bound(self):
        config = SceneSampler(beta=0.0, max_order=0, src_distance=(2.0, 2.8))
        rng = np.random.default_rng(5)
        hits = 0
        total = 40
        for seed in range(total):
            scene = sample_scene(config, seed + 1000)
            x = Waveform(rng.normal(size=FS), FS)
            out = render(x, scene.rir_pair(scene.target_pos, FS))
            theta_hat = estimate_doa_gcc(out.samples[0], out.samples[1],
                                         scene.array.spacing, FS)
            bound = lag_quantization_bound_deg(scene.theta_t, scene.array.spacing, FS)
            if abs(theta_hat - scene.theta_t) <= bound + 1e-9:
                hits += 1
        assert hits >= total - 1

    def test_bound_positive_and_finite(self):
        for theta in (10.18, 45.0, 90.0, 135.0, 166.96):
            b = lag_quantization_bound_deg(theta, 0.1, FS)
            assert 0 < b < 45.0

"""DoA network: features, forward contract, training, inference plumbing."""

import numpy as np
import pytest

from locselect import coding
from locselect.acoustics import SceneSampler, mix_at_snr, render, sample_scene
from locselect.doanet import (
    DoaClip,
    DoaNetConfig,
    assemble_features,
    doanet_forward,
    doanet_forward_full,
    infer,
    init_doanet_params,
    train_doanet,
)
from locselect.dsp import Waveform, magnitude, phase, stft
from locselect.numerics import gradient_check
from locselect.speakers import CorpusConfig, sample_speakers, synth_utterance
from locselect.training import TrainHyper

FS = 16000
TINY = DoaNetConfig(n_freq=12, fc1=10, fc2=8, gru_hidden=4, fc3=6, sigma_theta=8.0)


class TestAssembleFeatures:
    def test_identical_channels_ipd_zero(self):
        rng = np.random.default_rng(0)
        mag = rng.uniform(0, 3, (12, 5))
        ph = rng.uniform(-np.pi, np.pi, (12, 5))
        feats = assemble_features(mag, ph, ph, "ipd_cos_sin")
        assert feats.shape == (5, 36)
        np.testing.assert_allclose(feats[:, 12:24], 1.0, atol=1e-12)  # cos block
        np.testing.assert_allclose(feats[:, 24:], 0.0, atol=1e-12)    # sin block

    def test_cos_sin_unit_circle(self):
        rng = np.random.default_rng(1)
        feats = assemble_features(
            rng.uniform(0, 3, (12, 5)),
            rng.uniform(-np.pi, np.pi, (12, 5)),
            rng.uniform(-np.pi, np.pi, (12, 5)),
            "ipd_cos_sin",
        )
        np.testing.assert_allclose(feats[:, 12:24] ** 2 + feats[:, 24:] ** 2, 1.0, atol=1e-9)

    def test_delay_gives_analytic_ipd(self):
        # channel 2 delayed by tau -> IPD at bin f equals 2*pi*f_hz*tau (mod 2*pi)
        rng = np.random.default_rng(2)
        x = rng.normal(size=FS)
        tau_samples = 3
        ch1 = x[tau_samples:]
        ch2 = x[:-tau_samples]  # ch2 lags ch1
        spec1 = stft(Waveform(ch1, FS), 400, 160)
        spec2 = stft(Waveform(ch2, FS), 400, 160)
        feats = assemble_features(magnitude(spec1), phase(spec1), phase(spec2))
        f_hz = spec1.bin_frequencies()
        expected = 2 * np.pi * f_hz * tau_samples / FS
        # compare on well-excited bins via cos/sin to avoid wrap bookkeeping
        cos_block = feats[:, 201:402].mean(axis=0)
        sin_block = feats[:, 402:].mean(axis=0)
        for k in range(5, 150, 10):
            assert cos_block[k] == pytest.approx(np.cos(expected[k]), abs=0.05)
            assert sin_block[k] == pytest.approx(np.sin(expected[k]), abs=0.05)

    def test_literal_mode_width(self):
        feats = assemble_features(np.zeros((201, 4)), np.zeros((201, 4)),
                                  np.zeros((201, 4)), "literal_phase")
        assert feats.shape == (4, 603)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            assemble_features(np.zeros((12, 5)), np.zeros((12, 4)), np.zeros((12, 5)))


class TestForward:
    def test_output_shape_and_range(self):
        params = init_doanet_params(TINY, 1)
        rng = np.random.default_rng(3)
        for t_len in (1, 4):
            post = doanet_forward(rng.normal(size=(t_len, 36)), params, "eval")
            assert post.data.shape == (t_len, 360)
            assert np.all(post.data > 0) and np.all(post.data < 1)

    def test_zero_params_give_half(self):
        params = init_doanet_params(TINY, 2)
        for _, t in params.items():
            t.data[:] = 0.0
        post = doanet_forward(np.random.default_rng(4).normal(size=(3, 36)), params, "eval")
        np.testing.assert_allclose(post.data, 0.5, atol=1e-12)

    def test_decode_invariant_to_monotone_transform(self):
        params = init_doanet_params(TINY, 3)
        post = doanet_forward(np.random.default_rng(5).normal(size=(4, 36)), params, "eval").data
        base = coding.decode_doa(post)
        np.testing.assert_array_equal(coding.decode_doa(2.0 * post + 0.3), base)

    def test_feature_width_mismatch(self):
        params = init_doanet_params(TINY, 4)
        with pytest.raises(ValueError, match="feature width"):
            doanet_forward(np.zeros((3, 35)), params)

    def test_gradient_check_end_to_end(self):
        params = init_doanet_params(TINY, 5)
        feats = np.random.default_rng(6).normal(size=(5, 36))
        target = coding.encode_posterior(90, 8.0, 5)
        from locselect.numerics import Tensor, mse_loss
        from locselect.doanet import _forward_stack

        def loss():
            pred, _ = _forward_stack(Tensor(feats), 1, 5, params, "train")
            return mse_loss(pred, Tensor(target))

        # h=1e-4 keeps finite-difference roundoff (eps*|L|/h) below the
        # smallest true gradients of the composed network
        assert gradient_check(loss, params, h=1e-4, max_entries_per_param=3) < 1e-4


def make_clips(n, seed=0, t_seconds=0.6):
    """Physically rendered anechoic clips with distinct DoAs."""
    config = SceneSampler(beta=0.0, max_order=0)
    speakers = sample_speakers(CorpusConfig(n_speakers=4, min_f1_gap_hz=40.0), seed)
    clips = []
    for i in range(n):
        scene = sample_scene(config, seed * 1000 + i)
        target_wave = synth_utterance(speakers[i % 2], t_seconds, seed * 57 + i)
        interf_wave = synth_utterance(speakers[2 + i % 2], t_seconds, seed * 91 + i)
        tgt = render(target_wave, scene.rir_pair(scene.target_pos, FS)).samples
        itf = render(interf_wave, scene.rir_pair(scene.interferer_positions[0], FS)).samples
        res = mix_at_snr(tgt, itf, 5.0)
        ref = synth_utterance(speakers[i % 2], t_seconds, seed * 131 + i + 7)
        clips.append(DoaClip(
            clip_id=f"clip{i}",
            mixture=res.mixture,
            reference=ref.samples,
            theta_class=coding.to_class(scene.theta_t),
            snr_db=5.0,
        ))
    return clips


class TestTraining:
    def test_loss_decreases_and_unmasked_contract(self):
        clips = make_clips(5, seed=1)
        cfg = DoaNetConfig(fc1=24, fc2=16, gru_hidden=6, fc3=12)
        hyper = TrainHyper(epochs=4, batch_clips=5, lr=3e-3, seed=1, val_fraction=0.2)
        result = train_doanet(clips, None, hyper, cfg)  # identity mask: no reference read
        losses = [h["train_loss"] for h in result.history]
        assert losses[-1] < losses[0]
        assert np.isfinite(result.history[-1]["val_mae"])

    def test_deterministic(self):
        clips = make_clips(3, seed=2)
        cfg = DoaNetConfig(fc1=16, fc2=12, gru_hidden=4, fc3=8)
        hyper = TrainHyper(epochs=2, batch_clips=3, lr=1e-3, seed=5, val_fraction=0.0)
        a = train_doanet(clips, None, hyper, cfg)
        b = train_doanet(clips, None, hyper, cfg)
        for name, t in a.params.items():
            assert t.data.tobytes() == b.params.tensor(name).data.tobytes()

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            train_doanet([], None, TrainHyper(epochs=1))


class TestInfer:
    def test_determinism_and_shapes(self):
        clips = make_clips(2, seed=3)
        cfg = DoaNetConfig(fc1=16, fc2=12, gru_hidden=4, fc3=8)
        result = train_doanet(clips, None, TrainHyper(epochs=1, batch_clips=2, lr=1e-3,
                                                      seed=7, val_fraction=0.0), cfg)
        wave = Waveform(clips[0].mixture, FS)
        a = infer(wave, None, None, result.params, cfg)
        b = infer(wave, None, None, result.params, cfg)
        np.testing.assert_array_equal(a.posterior, b.posterior)
        np.testing.assert_array_equal(a.trace, b.trace)
        assert a.clip_doa == b.clip_doa
        assert a.posterior.shape[1] == 360
        expected_t = (clips[0].mixture.shape[1] - 400) // 160 + 1
        assert a.posterior.shape[0] == expected_t
        assert np.all(a.posterior > 0) and np.all(a.posterior < 1)
        assert a.mask is None
        # pre-sigmoid activations reproduce the posterior through the sigmoid
        np.testing.assert_allclose(1 / (1 + np.exp(-a.pre_sigmoid)), a.posterior, atol=1e-12)

    def test_masked_infer_requires_reference(self):
        from locselect.masknet import MaskNetConfig, init_masknet_params

        clips = make_clips(1, seed=4)
        cfg = DoaNetConfig(fc1=16, fc2=12, gru_hidden=4, fc3=8)
        doa = train_doanet(clips, None, TrainHyper(epochs=1, batch_clips=1, lr=1e-3,
                                                   seed=9, val_fraction=0.0), cfg)
        mask_params = init_masknet_params(MaskNetConfig(), 0)
        with pytest.raises(ValueError, match="reference"):
            infer(Waveform(clips[0].mixture, FS), None, mask_params, doa.params, cfg)

"""Mask network: embedding contract, mask range, IRM target, training sanity."""

import numpy as np
import pytest

from locselect.masknet import (
    MaskNetConfig,
    MaskSample,
    apply_mask,
    embed_reference,
    init_masknet_params,
    irm_target,
    mask_for_clip,
    predict_mask,
    train_masknet,
)
from locselect.numerics import gradient_check
from locselect.training import TrainHyper

TINY = MaskNetConfig(n_freq=12, enc_hidden=10, embed_dim=4, pre_hidden=8, gru_hidden=5)


def tiny_params(seed=0):
    return init_masknet_params(TINY, seed)


class TestEmbedding:
    def test_unit_norm(self):
        params = tiny_params()
        rng = np.random.default_rng(0)
        e = embed_reference(rng.uniform(0, 3, (12, 7)), params)
        assert np.linalg.norm(e.data) == pytest.approx(1.0, abs=1e-9)

    def test_zero_spectrogram_finite(self):
        e = embed_reference(np.zeros((12, 5)), tiny_params())
        assert np.all(np.isfinite(e.data))

    def test_scaling_changes_embedding(self):
        params = tiny_params()
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 3, (12, 7))
        a = embed_reference(x, params).data
        b = embed_reference(2 * x, params).data
        assert not np.allclose(a, b)

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError):
            embed_reference(np.zeros((12, 0)), tiny_params())


class TestPredictMask:
    def test_output_range(self):
        params = tiny_params(3)
        rng = np.random.default_rng(2)
        mask = predict_mask(rng.uniform(0, 5, (12, 9)),
                            embed_reference(rng.uniform(0, 3, (12, 4)), params), params)
        assert mask.data.shape == (12, 9)
        assert np.all(mask.data >= 0) and np.all(mask.data <= 1)

    def test_zero_params_give_half(self):
        params = tiny_params()
        for _, t in params.items():
            t.data[:] = 0.0
        rng = np.random.default_rng(3)
        mask = predict_mask(rng.uniform(0, 5, (12, 6)),
                            embed_reference(rng.uniform(0, 3, (12, 4)), params), params)
        np.testing.assert_allclose(mask.data, 0.5, atol=1e-12)

    def test_embedding_dim_mismatch(self):
        from locselect.numerics import Tensor

        with pytest.raises(ValueError, match="embedding dimension"):
            predict_mask(np.zeros((12, 5)), Tensor(np.zeros(7)), tiny_params())

    def test_reference_swap_changes_mask(self):
        params = tiny_params(5)
        rng = np.random.default_rng(4)
        mix = rng.uniform(0, 5, (12, 8))
        mask_a = mask_for_clip(mix, rng.uniform(0, 3, (12, 6)), params)
        mask_b = mask_for_clip(mix, rng.uniform(0, 3, (12, 6)) + 1.0, params)
        assert np.mean(np.abs(mask_a - mask_b)) > 0

    def test_gradient_check(self):
        params = tiny_params(7)
        rng = np.random.default_rng(5)
        mix = rng.uniform(0, 3, (12, 4))
        ref = rng.uniform(0, 3, (12, 3))

        def loss():
            mask = predict_mask(mix, embed_reference(ref, params), params)
            return (mask * mask).sum()

        assert gradient_check(loss, params, h=1e-5, max_entries_per_param=4) < 1e-4


class TestApplyMask:
    def test_ones_identity(self):
        x = np.random.default_rng(6).uniform(0, 4, (5, 7))
        np.testing.assert_array_equal(apply_mask(x, np.ones_like(x)), x)

    def test_zeros(self):
        x = np.random.default_rng(7).uniform(0, 4, (5, 7))
        np.testing.assert_array_equal(apply_mask(x, np.zeros_like(x)), np.zeros_like(x))

    def test_half(self):
        x = np.random.default_rng(8).uniform(0, 4, (5, 7))
        np.testing.assert_allclose(apply_mask(x, np.full_like(x, 0.5)), 0.5 * x)

    def test_never_amplifies(self):
        rng = np.random.default_rng(9)
        x = rng.uniform(0, 4, (5, 7))
        mask = rng.uniform(0, 1, (5, 7))
        assert np.all(apply_mask(x, mask) <= x)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            apply_mask(np.zeros((5, 7)), np.zeros((7, 5)))


class TestIrmTarget:
    def test_zero_interferer(self):
        s = np.random.default_rng(10).uniform(0.5, 2, (4, 6))
        np.testing.assert_allclose(irm_target(s, np.zeros_like(s)), 1.0, atol=1e-7)

    def test_equal_components(self):
        s = np.random.default_rng(11).uniform(0.5, 2, (4, 6))
        np.testing.assert_allclose(irm_target(s, s), 0.5, atol=1e-7)

    def test_zero_target(self):
        i = np.random.default_rng(12).uniform(0.5, 2, (4, 6))
        np.testing.assert_allclose(irm_target(np.zeros_like(i), i), 0.0, atol=1e-7)

    def test_range(self):
        rng = np.random.default_rng(13)
        irm = irm_target(rng.uniform(0, 2, (4, 6)), rng.uniform(0, 2, (4, 6)))
        assert np.all(irm >= 0) and np.all(irm <= 1)


def synthetic_mask_samples(n_clips, t_len=6, f_bins=12, seed=0):
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_clips):
        s = rng.uniform(0, 2, (f_bins, t_len))
        interf = rng.uniform(0, 2, (f_bins, t_len))
        samples.append(MaskSample(
            clip_id=f"c{i}",
            mix_mag=s + interf,
            ref_mag=rng.uniform(0, 2, (f_bins, 5)),
            irm=irm_target(s, interf),
        ))
    return samples


class TestTraining:
    def test_loss_decreases(self):
        samples = synthetic_mask_samples(8)
        hyper = TrainHyper(epochs=5, batch_clips=4, lr=5e-3, seed=1, val_fraction=0.25)
        result = train_masknet(samples, hyper, TINY)
        losses = [h["train_loss"] for h in result.history]
        assert losses[-1] < losses[0]
        assert all(np.isfinite(h["val_loss"]) for h in result.history)

    def test_deterministic(self):
        samples = synthetic_mask_samples(6)
        hyper = TrainHyper(epochs=3, batch_clips=3, lr=1e-3, seed=2)
        a = train_masknet(samples, hyper, TINY)
        b = train_masknet(samples, hyper, TINY)
        for name, t in a.params.items():
            assert t.data.tobytes() == b.params.tensor(name).data.tobytes()

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train_masknet([], TrainHyper(epochs=1))

    def test_resume_matches_uninterrupted(self):
        samples = synthetic_mask_samples(6)
        full = train_masknet(samples, TrainHyper(epochs=4, batch_clips=3, lr=1e-3, seed=3), TINY)
        part = train_masknet(samples, TrainHyper(epochs=2, batch_clips=3, lr=1e-3, seed=3), TINY)
        resumed = train_masknet(
            samples, TrainHyper(epochs=4, batch_clips=3, lr=1e-3, seed=3), TINY,
            resume=(part.params, part.adam, 2),
        )
        for name, t in full.params.items():
            assert t.data.tobytes() == resumed.params.tensor(name).data.tobytes()

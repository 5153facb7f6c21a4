import math

import numpy as np
import pytest
import torch

from conftest import const_denoiser
from styleseg import (
    DiffAEConfig,
    DiffAEModel,
    LatentState,
    NoiseSchedule,
    SemanticCode,
    ddim_forward_step,
    ddim_reverse_step,
    encode_semantic,
    generate_conditioned,
    predict_x0,
    train_diffae,
)


def _rand(shape, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(shape, generator=g, dtype=dtype)


class TestLatentState:
    def test_requires_tensor(self):
        with pytest.raises(TypeError):
            LatentState(np.zeros(3), 1)

    def test_rejects_negative_t(self):
        with pytest.raises(ValueError):
            LatentState(torch.zeros(3), -1)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            LatentState(torch.tensor([float("nan")]), 1)


class TestSemanticCode:
    def test_dim(self):
        assert SemanticCode(torch.zeros(8)).dim == 8
        assert SemanticCode(torch.zeros(2, 8)).dim == 8

    def test_rejects_bad_rank(self):
        with pytest.raises(ValueError):
            SemanticCode(torch.zeros(2, 2, 2))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            SemanticCode(torch.tensor([float("inf")]))


class TestPredictX0:
    def test_hand_value(self):
        # alpha_bar = 0.25, x = 1, eps = 0.5:
        # (1 - sqrt(0.75)*0.5) / 0.5 = 2 - sqrt(0.75)
        sched = NoiseSchedule(np.array([1.0, 0.25]))
        x0 = predict_x0(torch.tensor([1.0], dtype=torch.float64), 1, torch.tensor([0.5], dtype=torch.float64), sched)
        assert abs(float(x0[0]) - 1.1339745962155614) < 1e-15

    def test_zero_eps_rescales(self):
        sched = NoiseSchedule.linear_beta(T=10)
        x = _rand((3, 4, 4), seed=1)
        x0 = predict_x0(x, 7, torch.zeros_like(x), sched)
        expected = x / math.sqrt(float(sched.alpha_bar[7]))
        assert torch.allclose(x0, expected, atol=0, rtol=0)

    def test_rejects_t_out_of_range(self):
        sched = NoiseSchedule.linear_beta(T=10)
        x = torch.zeros(1, 2, 2)
        with pytest.raises(ValueError):
            predict_x0(x, 0, x, sched)
        with pytest.raises(ValueError):
            predict_x0(x, 11, x, sched)

    def test_rejects_shape_mismatch(self):
        sched = NoiseSchedule.linear_beta(T=10)
        with pytest.raises(ValueError):
            predict_x0(torch.zeros(2, 2), 1, torch.zeros(3, 3), sched)


class TestForwardStep:
    def test_zero_denoiser_closed_form(self):
        sched = NoiseSchedule.linear_beta(T=20)
        x = _rand((3, 5, 5), seed=2)
        state = ddim_forward_step(LatentState(x, 4), const_denoiser(0.0), sched)
        scale = math.sqrt(float(sched.alpha_bar[5]) / float(sched.alpha_bar[4]))
        assert state.t == 5
        assert torch.allclose(state.x, x * scale, atol=1e-12, rtol=0)

    def test_flat_segment_is_identity(self):
        flat = NoiseSchedule._unchecked(np.array([1.0, 0.5, 0.5]))
        x = _rand((2, 3, 3), seed=3)
        out = ddim_forward_step(LatentState(x, 1), const_denoiser(0.7), flat)
        assert torch.allclose(out.x, x, atol=1e-12, rtol=0)

    def test_deterministic(self):
        sched = NoiseSchedule.linear_beta(T=10)
        x = _rand((3, 4, 4), seed=4)
        a = ddim_forward_step(LatentState(x, 3), const_denoiser(0.2), sched)
        b = ddim_forward_step(LatentState(x, 3), const_denoiser(0.2), sched)
        assert torch.equal(a.x, b.x) and a.t == b.t

    def test_rejects_t_at_T(self):
        sched = NoiseSchedule.linear_beta(T=10)
        with pytest.raises(ValueError):
            ddim_forward_step(LatentState(torch.zeros(1, 2, 2), 10), const_denoiser(0.0), sched)

    def test_non_finite_denoiser_aborts(self):
        sched = NoiseSchedule.linear_beta(T=10)
        with pytest.raises(RuntimeError):
            ddim_forward_step(
                LatentState(torch.zeros(1, 2, 2), 3), const_denoiser(float("nan")), sched
            )


class TestReverseStep:
    def test_terminal_step_closed_form(self):
        # alpha_bar[0] = 1 and eps = 0: x_0 = x_1 / sqrt(alpha_bar[1])
        sched = NoiseSchedule(np.array([1.0, 0.25]))
        x = torch.tensor([2.0, -1.0], dtype=torch.float64)
        out = ddim_reverse_step(LatentState(x, 1), const_denoiser(0.0), sched)
        assert out.t == 0
        assert torch.allclose(out.x, x / 0.5, atol=1e-12, rtol=0)

    def test_two_step_composition(self):
        sched = NoiseSchedule.linear_beta(T=12)
        x = _rand((3, 4, 4), seed=5)
        state = LatentState(x, 12)
        for _ in range(2):
            state = ddim_reverse_step(state, const_denoiser(0.0), sched)
        scale = math.sqrt(float(sched.alpha_bar[10]) / float(sched.alpha_bar[12]))
        assert torch.allclose(state.x, x * scale, atol=1e-12, rtol=0)

    def test_constant_eps_inverts_forward(self):
        sched = NoiseSchedule.linear_beta(T=30)
        den = const_denoiser(0.37)
        x = _rand((3, 6, 6), seed=6)
        state = LatentState(x, 1)
        for _ in range(12):
            state = ddim_forward_step(state, den, sched)
        for _ in range(12):
            state = ddim_reverse_step(state, den, sched)
        assert state.t == 1
        assert float((state.x - x).abs().max()) <= 1e-6

    def test_rejects_t_zero(self):
        sched = NoiseSchedule.linear_beta(T=10)
        with pytest.raises(ValueError):
            ddim_reverse_step(LatentState(torch.zeros(1, 2, 2), 0), const_denoiser(0.0), sched)


class TestConditioning:
    def test_null_equivalence(self, fresh_model):
        # A denoiser ignoring its code gives identical trajectories either way.
        sched = fresh_model.schedule
        x = _rand((3, 8, 8), seed=7, dtype=torch.float32)
        code = SemanticCode(torch.ones(8))

        def ignores_code(x_in, t, code=None):
            return torch.full_like(x_in, 0.11)

        a = ddim_forward_step(LatentState(x, 2), ignores_code, sched, code=code)
        b = ddim_forward_step(LatentState(x, 2), ignores_code, sched, code=None)
        assert torch.equal(a.x, b.x)

    def test_model_uses_code(self, tiny_images, tiny_config):
        # The trained conditioned denoiser responds to its code input.
        model, _ = train_diffae(tiny_images, tiny_config)
        x = tiny_images[0]
        z1 = encode_semantic(tiny_images[0], model)
        z2 = encode_semantic(tiny_images[1], model)
        e1 = model.denoiser(x, 5, z1)
        e2 = model.denoiser(x, 5, z2)
        assert not torch.equal(e1, e2)


class TestEncodeSemantic:
    def test_deterministic_and_dim(self, fresh_model, tiny_images):
        a = encode_semantic(tiny_images[0], fresh_model)
        b = encode_semantic(tiny_images[0], fresh_model)
        assert torch.equal(a.z, b.z)
        assert a.dim == fresh_model.config.code_dim

    def test_distinct_images_distinct_codes(self, tiny_images, tiny_config):
        model, _ = train_diffae(tiny_images, tiny_config)
        za = encode_semantic(tiny_images[0], model).z.detach()
        zb = encode_semantic(tiny_images[1], model).z.detach()
        cos = float(torch.dot(za, zb) / (za.norm() * zb.norm()))
        assert cos < 1.0

    def test_shape_mismatch(self, fresh_model):
        with pytest.raises(ValueError):
            encode_semantic(torch.zeros(1, 16, 16), fresh_model)


class TestGenerateConditioned:
    def test_deterministic(self, fresh_model):
        noise = _rand((3, 16, 16), seed=8, dtype=torch.float32)
        code = SemanticCode(torch.zeros(8))
        a = generate_conditioned(code, noise, fresh_model)
        b = generate_conditioned(code, noise, fresh_model)
        assert torch.equal(a, b)

    def test_single_step_closed_form(self):
        # T = 1 and a zero denoiser: output = noise / sqrt(alpha_bar[1]).
        cfg = DiffAEConfig(code_dim=8, denoiser_width=8, denoiser_blocks=1, encoder_width=8, T=1)
        torch.manual_seed(0)
        model = DiffAEModel(cfg).double()
        noise = _rand((3, 8, 8), seed=9)
        out = generate_conditioned(SemanticCode(torch.zeros(8, dtype=torch.float64)), noise, model)
        expected = noise / math.sqrt(float(model.schedule.alpha_bar[1]))
        assert torch.allclose(out, expected, atol=1e-12, rtol=0)

    def test_reconstruction_beats_training_plateau(self, tiny_images):
        cfg = DiffAEConfig(
            code_dim=8, denoiser_width=8, denoiser_blocks=1, encoder_width=8,
            T=10, epochs=30, batch_size=4, seed=0,
        )
        model, history = train_diffae(tiny_images, cfg)
        x = tiny_images[0]
        with torch.no_grad():
            code = encode_semantic(x, model)
            state = LatentState(x, 1)
            for _ in range(model.schedule.T - 1):
                state = ddim_forward_step(state, model.denoiser, model.schedule, code)
            recon = generate_conditioned(code, state.x, model)
        mse = float(((recon - x) ** 2).mean())
        plateau = float(np.mean(history[-4:]))
        assert mse < plateau


class TestTrainDiffAE:
    def test_history_length(self, tiny_images, tiny_config):
        model, history = train_diffae(tiny_images, tiny_config)
        # 4 images, batch 2, 1 epoch -> 2 steps
        assert len(history) == 2
        assert all(np.isfinite(v) for v in history)

    def test_seeded_reproducibility(self, tiny_images, tiny_config):
        m1, h1 = train_diffae(tiny_images, tiny_config)
        m2, h2 = train_diffae(tiny_images, tiny_config)
        assert h1 == h2
        for (n1, p1), (n2, p2) in zip(m1.state_dict().items(), m2.state_dict().items()):
            assert n1 == n2 and torch.equal(p1, p2)

    def test_empty_dataset_rejected(self, tiny_config):
        with pytest.raises(ValueError):
            train_diffae(torch.zeros(0, 3, 16, 16), tiny_config)

    def test_wrong_channel_count_rejected(self, tiny_config):
        with pytest.raises(ValueError):
            train_diffae(torch.zeros(4, 1, 16, 16), tiny_config)

    def test_loss_halves_on_toy_corpus(self):
        rng = np.random.default_rng(11)
        base = rng.random((1, 3, 16, 16), dtype=np.float32)
        images = np.clip(base + rng.normal(0, 0.05, (32, 3, 16, 16)).astype(np.float32), 0, 1)
        cfg = DiffAEConfig(
            code_dim=8, denoiser_width=16, denoiser_blocks=1, encoder_width=8,
            T=10, beta_end=0.2, epochs=50, batch_size=8, seed=0,
        )
        model, history = train_diffae(images, cfg)
        steps = 32 // 8
        first = float(np.mean(history[:steps]))
        last = float(np.mean(history[-steps:]))
        assert last < 0.5 * first

    def test_freeze_marks_all_parameters(self, fresh_model):
        fresh_model.freeze()
        assert all(not p.requires_grad for p in fresh_model.parameters())

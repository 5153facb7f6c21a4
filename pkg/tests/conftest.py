"""Shared fixtures: tiny models sized for fast, deterministic tests."""

import numpy as np
import pytest
import torch

from styleseg import DiffAEConfig, DiffAEModel


def const_denoiser(value: float):
    """Input-independent denoiser; makes forward/reverse exact inverses."""

    def denoiser(x, t, code=None):
        return torch.full_like(x, value)

    return denoiser


@pytest.fixture(scope="session")
def tiny_config():
    return DiffAEConfig(
        code_dim=8,
        denoiser_width=8,
        denoiser_blocks=1,
        encoder_width=8,
        T=10,
        epochs=1,
        batch_size=2,
    )


@pytest.fixture()
def fresh_model(tiny_config):
    """Untrained tiny model; its denoiser outputs exactly zero by construction."""
    torch.manual_seed(0)
    return DiffAEModel(tiny_config)


@pytest.fixture(scope="session")
def tiny_images():
    rng = np.random.default_rng(7)
    return torch.as_tensor(rng.random((4, 3, 16, 16), dtype=np.float32))

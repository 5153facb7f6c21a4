"""Deterministic diffusion kernels and the semantic autoencoder.

The trajectory ops implement the deterministic update

    x_next = sqrt(alpha_bar[t_next]) * x0_pred + sqrt(1 - alpha_bar[t_next]) * eps

where eps is the denoiser's noise prediction at the current step and

    x0_pred = (x_t - sqrt(1 - alpha_bar[t]) * eps) / sqrt(alpha_bar[t]).

Forward steps move t -> t+1, reverse steps t -> t-1; with a denoiser that
returns a constant the two are exact inverses of each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .networks import CondDenoiser, SemanticEncoder
from .schedule import NoiseSchedule

# A denoiser is any callable (x, t, code) -> eps with eps.shape == x.shape.
Denoiser = Callable[..., torch.Tensor]


@dataclass(frozen=True)
class LatentState:
    """A latent image x at integer timestep t (t = 0 is the clean image)."""

    x: torch.Tensor
    t: int

    def __post_init__(self) -> None:
        if not torch.is_tensor(self.x):
            raise TypeError("LatentState.x must be a torch.Tensor")
        if int(self.t) != self.t or self.t < 0:
            raise ValueError(f"t must be a non-negative integer, got {self.t!r}")
        object.__setattr__(self, "t", int(self.t))
        if not bool(torch.isfinite(self.x).all()):
            raise ValueError("latent contains non-finite entries")


@dataclass(frozen=True)
class SemanticCode:
    """Semantic conditioning vector z, shape [d] or [B, d]."""

    z: torch.Tensor

    def __post_init__(self) -> None:
        if not torch.is_tensor(self.z):
            raise TypeError("SemanticCode.z must be a torch.Tensor")
        if self.z.dim() not in (1, 2):
            raise ValueError(f"code must be [d] or [B, d], got {tuple(self.z.shape)}")
        if not bool(torch.isfinite(self.z).all()):
            raise ValueError("code contains non-finite entries")

    @property
    def dim(self) -> int:
        return int(self.z.shape[-1])


def _check_t(t: int, lo: int, hi: int, what: str) -> None:
    if not lo <= t <= hi:
        raise ValueError(f"{what} requires {lo} <= t <= {hi}, got t={t}")


def predict_x0(
    x_t: torch.Tensor,
    t: int,
    eps_value: torch.Tensor,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """Clean-image estimate implied by a latent and a noise value at step t."""
    _check_t(t, 1, schedule.T, "predict_x0")
    if eps_value.shape != x_t.shape:
        raise ValueError(f"eps shape {tuple(eps_value.shape)} != x shape {tuple(x_t.shape)}")
    ab = float(schedule.alpha_bar[t])
    return (x_t - math.sqrt(1.0 - ab) * eps_value) / math.sqrt(ab)


def _ddim_step(
    x: torch.Tensor,
    eps: torch.Tensor,
    schedule: NoiseSchedule,
    t_from: int,
    t_to: int,
) -> torch.Tensor:
    ab_from = float(schedule.alpha_bar[t_from])
    ab_to = float(schedule.alpha_bar[t_to])
    x0 = (x - math.sqrt(1.0 - ab_from) * eps) / math.sqrt(ab_from)
    return math.sqrt(ab_to) * x0 + math.sqrt(1.0 - ab_to) * eps


def _eval_denoiser(
    denoiser: Denoiser,
    x: torch.Tensor,
    t: int,
    code: Optional[SemanticCode],
) -> torch.Tensor:
    eps = denoiser(x, t, code)
    if eps.shape != x.shape:
        raise ValueError(f"denoiser returned shape {tuple(eps.shape)}, expected {tuple(x.shape)}")
    if not bool(torch.isfinite(eps).all()):
        raise RuntimeError(f"denoiser produced non-finite values at t={t}")
    return eps


def ddim_forward_step(
    state: LatentState,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    code: Optional[SemanticCode] = None,
) -> LatentState:
    """One deterministic noising step, t -> t+1."""
    _check_t(state.t, 1, schedule.T - 1, "forward step")
    eps = _eval_denoiser(denoiser, state.x, state.t, code)
    return LatentState(_ddim_step(state.x, eps, schedule, state.t, state.t + 1), state.t + 1)


def ddim_reverse_step(
    state: LatentState,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    code: Optional[SemanticCode] = None,
) -> LatentState:
    """One deterministic denoising step, t -> t-1."""
    _check_t(state.t, 1, schedule.T, "reverse step")
    eps = _eval_denoiser(denoiser, state.x, state.t, code)
    return LatentState(_ddim_step(state.x, eps, schedule, state.t, state.t - 1), state.t - 1)


@dataclass
class DiffAEConfig:
    """Hyperparameters for the semantic diffusion autoencoder."""

    image_channels: int = 3
    code_dim: int = 64
    denoiser_width: int = 32
    denoiser_blocks: int = 2
    encoder_width: int = 16
    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    epochs: int = 30
    batch_size: int = 12
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.image_channels < 1 or self.code_dim < 1:
            raise ValueError("image_channels and code_dim must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class DiffAEModel(nn.Module):
    """Semantic encoder + conditioned denoiser sharing one noise schedule."""

    def __init__(self, config: DiffAEConfig, schedule: Optional[NoiseSchedule] = None):
        super().__init__()
        self.config = config
        self.schedule = schedule or NoiseSchedule.linear_beta(
            config.T, config.beta_start, config.beta_end
        )
        self.encoder = SemanticEncoder(
            channels=config.image_channels,
            width=config.encoder_width,
            code_dim=config.code_dim,
        )
        self.denoiser = CondDenoiser(
            channels=config.image_channels,
            width=config.denoiser_width,
            blocks=config.denoiser_blocks,
            code_dim=config.code_dim,
        )

    def freeze(self) -> "DiffAEModel":
        for p in self.parameters():
            p.requires_grad_(False)
        return self


def encode_semantic(image: torch.Tensor, model: DiffAEModel) -> SemanticCode:
    """Semantic code of a clean image ([3,H,W] or [B,3,H,W])."""
    if not torch.is_tensor(image):
        image = torch.as_tensor(np.asarray(image), dtype=torch.float32)
    return SemanticCode(model.encoder(image))


def generate_conditioned(
    code: SemanticCode,
    noise: torch.Tensor,
    model: DiffAEModel,
) -> torch.Tensor:
    """Full reverse trajectory t = T..1 from a noise image, conditioned on code."""
    state = LatentState(noise, model.schedule.T)
    for _ in range(model.schedule.T):
        state = ddim_reverse_step(state, model.denoiser, model.schedule, code)
    return state.x


def _noisy(
    x0: torch.Tensor,
    t: torch.Tensor,
    eps: torch.Tensor,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    # Closed-form latent at per-sample timesteps t (long tensor [B]).
    ab = torch.as_tensor(schedule.alpha_bar, dtype=x0.dtype, device=x0.device)[t]
    ab = ab.reshape(-1, *([1] * (x0.dim() - 1)))
    return torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * eps


def train_diffae(images, config: DiffAEConfig) -> tuple[DiffAEModel, list[float]]:
    """Train encoder + denoiser with the noise-prediction objective.

    images: [N, C, H, W] array or tensor with values in [0, 1].
    Returns the trained model and the per-step loss history. Same config
    and images give a bitwise-identical model on the same machine.
    """
    x_all = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    if x_all.dim() != 4 or x_all.shape[1] != config.image_channels:
        raise ValueError(f"expected [N,{config.image_channels},H,W] images, got {tuple(x_all.shape)}")
    n = x_all.shape[0]
    if n == 0:
        raise ValueError("empty training set")

    torch.manual_seed(config.seed)
    model = DiffAEModel(config)
    gen = torch.Generator().manual_seed(config.seed + 1)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    history: list[float] = []

    model.train()
    for _ in range(config.epochs):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, config.batch_size):
            x0 = x_all[perm[start : start + config.batch_size]]
            b = x0.shape[0]
            t = torch.randint(1, config.T + 1, (b,), generator=gen)
            eps = torch.randn(x0.shape, generator=gen, dtype=x0.dtype)
            x_t = _noisy(x0, t, eps, model.schedule)
            z = model.encoder(x0)
            pred = model.denoiser(x_t, t, z)
            loss = F.mse_loss(pred, eps)
            if not bool(torch.isfinite(loss)):
                raise RuntimeError(f"training loss became non-finite at step {len(history)}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            history.append(float(loss.item()))
    model.eval()
    return model, history

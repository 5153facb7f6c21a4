"""Image embedding backend used by the direction-alignment loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@runtime_checkable
class EmbeddingBackend(Protocol):
    """Anything that maps an image to a unit-norm feature vector."""

    dim: int

    def embed(self, image: torch.Tensor) -> torch.Tensor: ...


@dataclass
class EmbedConfig:
    dim: int = 32
    width: int = 16
    channels: int = 3
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    temperature: float = 0.2
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 2 or self.width < 1:
            raise ValueError("dim must be >= 2 and width >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.temperature <= 0 or self.learning_rate <= 0:
            raise ValueError("temperature and learning_rate must be positive")


class ConvEmbedding(nn.Module):
    """Small conv encoder with L2-normalized output."""

    def __init__(self, channels: int = 3, width: int = 16, dim: int = 32):
        super().__init__()
        self.channels = channels
        self.dim = dim
        self.net = nn.Sequential(
            nn.Conv2d(channels, width, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(2 * width, 4 * width, 3, stride=2, padding=1),
            nn.SiLU(),
        )
        self.head = nn.Linear(4 * width, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 3
        if squeeze:
            x = x[None]
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ValueError(f"expected [B,{self.channels},H,W] input, got {tuple(x.shape)}")
        h = self.net(x).mean(dim=(-2, -1))
        z = F.normalize(self.head(h), dim=-1)
        return z[0] if squeeze else z

    def embed(self, image: torch.Tensor) -> torch.Tensor:
        return self(image)


def _augment(x: torch.Tensor, noise_std: float, gen: torch.Generator) -> torch.Tensor:
    b = x.shape[0]
    out = x.clone()
    hflip = torch.rand(b, generator=gen) < 0.5
    vflip = torch.rand(b, generator=gen) < 0.5
    out[hflip] = out[hflip].flip(-1)
    out[vflip] = out[vflip].flip(-2)
    bright = 0.85 + 0.3 * torch.rand(b, 1, 1, 1, generator=gen, dtype=x.dtype)
    out = out * bright
    out = out + noise_std * torch.randn(out.shape, generator=gen, dtype=x.dtype)
    return out


def train_embedding(images, config: EmbedConfig = EmbedConfig()) -> ConvEmbedding:
    """Train the backend by instance discrimination over augmented views.

    Two augmented views of the same image attract, views of different
    images repel (normalized-temperature cross entropy). The returned
    network is frozen and in eval mode; same inputs and seed give a
    bitwise-identical network.
    """
    x_all = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    if x_all.dim() != 4 or x_all.shape[1] != config.channels:
        raise ValueError(f"expected [N,{config.channels},H,W] images, got {tuple(x_all.shape)}")
    n = x_all.shape[0]
    if n < 2:
        raise ValueError("instance discrimination needs at least 2 images")

    torch.manual_seed(config.seed)
    net = ConvEmbedding(config.channels, config.width, config.dim)
    gen = torch.Generator().manual_seed(config.seed + 1)
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    batch = min(config.batch_size, n)

    net.train()
    for _ in range(config.epochs):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            if idx.numel() < 2:
                continue
            x = x_all[idx]
            views = torch.cat([_augment(x, config.noise_std, gen), _augment(x, config.noise_std, gen)])
            z = net(views)
            b = idx.numel()
            sim = z @ z.T / config.temperature
            sim.fill_diagonal_(float("-inf"))
            target = torch.cat([torch.arange(b, 2 * b), torch.arange(0, b)])
            loss = F.cross_entropy(sim, target)
            if not bool(torch.isfinite(loss)):
                raise RuntimeError("embedding training loss became non-finite")
            opt.zero_grad()
            loss.backward()
            opt.step()
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net

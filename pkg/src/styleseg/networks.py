"""Network blocks: conditioned denoiser and semantic encoder."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def sinusoidal_time_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Fixed sin/cos features of the timestep, shape [B, dim]."""
    if dim % 2 != 0:
        raise ValueError("embedding dim must be even")
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / max(half - 1, 1)
    )
    ang = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1)


class _ResBlock(nn.Module):
    def __init__(self, width: int, emb_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.emb = nn.Linear(emb_dim, width)

    def forward(self, h: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        r = self.conv1(F.silu(h))
        r = r + self.emb(emb)[:, :, None, None]
        r = self.conv2(F.silu(r))
        return h + r


class CondDenoiser(nn.Module):
    """Residual conv network predicting the noise component of a latent.

    Conditioning is additive: a sinusoidal timestep embedding and (when
    present) a linear projection of the semantic code are summed and fed
    to every residual block. With no code the projection term is simply
    absent, so unconditioned calls are exact, not approximate.
    Fully convolutional: works at any spatial size.
    """

    def __init__(
        self,
        channels: int = 3,
        width: int = 32,
        blocks: int = 2,
        code_dim: int = 64,
        emb_dim: int = 64,
    ):
        super().__init__()
        self.channels = channels
        self.code_dim = code_dim
        self.emb_dim = emb_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(emb_dim, emb_dim),
            nn.SiLU(),
            nn.Linear(emb_dim, emb_dim),
        )
        self.code_proj = nn.Linear(code_dim, emb_dim)
        self.conv_in = nn.Conv2d(channels, width, 3, padding=1)
        self.blocks = nn.ModuleList([_ResBlock(width, emb_dim) for _ in range(blocks)])
        self.conv_out = nn.Conv2d(width, channels, 3, padding=1)
        nn.init.zeros_(self.conv_out.weight)
        nn.init.zeros_(self.conv_out.bias)

    def forward(self, x: torch.Tensor, t, code=None) -> torch.Tensor:
        squeeze = x.dim() == 3
        if squeeze:
            x = x[None]
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ValueError(f"expected [B,{self.channels},H,W] input, got {tuple(x.shape)}")
        if not torch.is_tensor(t):
            t = torch.full((x.shape[0],), float(t), dtype=x.dtype, device=x.device)
        else:
            t = t.to(dtype=x.dtype, device=x.device).reshape(-1)
        emb = self.time_mlp(sinusoidal_time_embedding(t, self.emb_dim))
        z = getattr(code, "z", code)
        if z is not None:
            if z.dim() == 1:
                z = z[None]
            if z.shape[-1] != self.code_dim:
                raise ValueError(f"code dim {z.shape[-1]} != expected {self.code_dim}")
            emb = emb + self.code_proj(z.to(dtype=x.dtype, device=x.device))
        h = self.conv_in(x)
        for block in self.blocks:
            h = block(h, emb)
        out = self.conv_out(F.silu(h))
        return out[0] if squeeze else out


class SemanticEncoder(nn.Module):
    """Strided conv stack + global average pool + linear head to a code vector."""

    def __init__(self, channels: int = 3, width: int = 16, code_dim: int = 64):
        super().__init__()
        self.channels = channels
        self.code_dim = code_dim
        self.net = nn.Sequential(
            nn.Conv2d(channels, width, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(2 * width, 4 * width, 3, stride=2, padding=1),
            nn.SiLU(),
        )
        self.head = nn.Linear(4 * width, code_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 3
        if squeeze:
            x = x[None]
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ValueError(f"expected [B,{self.channels},H,W] input, got {tuple(x.shape)}")
        h = self.net(x)
        h = h.mean(dim=(-2, -1))
        z = self.head(h)
        return z[0] if squeeze else z

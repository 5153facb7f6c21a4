"""Structure-preserving correction network (per-pixel linear map)."""

from __future__ import annotations

from typing import Optional, Sequence

import torch
import torch.nn as nn

from .diffusion import LatentState


class SPN(nn.Module):
    """1x1 conv over the clean input producing one correction field.

    The correction is computed once per image (it does not depend on the
    timestep) and added to the latent at every reverse step whose t lies
    inside the injection window. Parameters start at zero, so a fresh
    network maps every image to the zero correction and leaves
    trajectories untouched.
    """

    def __init__(
        self,
        channels: int = 3,
        t_lo: int = 0,
        t_hi: Optional[int] = None,
    ):
        super().__init__()
        if t_lo < 0:
            raise ValueError("t_lo must be >= 0")
        if t_hi is not None and t_hi < t_lo:
            raise ValueError("injection window requires t_lo <= t_hi")
        self.channels = channels
        self.t_lo = t_lo
        self.t_hi = t_hi
        self.conv = nn.Conv2d(channels, channels, kernel_size=1)
        nn.init.zeros_(self.conv.weight)
        nn.init.zeros_(self.conv.bias)

    def in_window(self, t: int) -> bool:
        return t >= self.t_lo and (self.t_hi is None or t <= self.t_hi)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        squeeze = image.dim() == 3
        if squeeze:
            image = image[None]
        if image.dim() != 4 or image.shape[1] != self.channels:
            raise ValueError(f"expected [B,{self.channels},H,W] input, got {tuple(image.shape)}")
        out = self.conv(image)
        return out[0] if squeeze else out


def spn_apply(spn: SPN, image: torch.Tensor) -> torch.Tensor:
    """Correction field for an image; same shape as the image."""
    return spn(image)


def inject(
    state: LatentState,
    correction: torch.Tensor,
    spn: Optional[SPN] = None,
) -> LatentState:
    """Add the correction to the latent if t falls in the injection window.

    With spn=None (or t outside the window) the state passes through
    unchanged, so a disabled network is exactly a no-op.
    """
    if spn is None or not spn.in_window(state.t):
        return state
    if correction.shape != state.x.shape and correction.shape != state.x.shape[-3:]:
        raise ValueError(
            f"correction shape {tuple(correction.shape)} incompatible with latent {tuple(state.x.shape)}"
        )
    return LatentState(state.x + correction, state.t)


def spn_loss(
    spn: SPN,
    image: torch.Tensor,
    reference_latents: Sequence[torch.Tensor],
) -> torch.Tensor:
    """Mean L2 distance between the correction field and reference latents.

    loss = mean_t || SPN(image) - ref_t ||_2, one norm per reference step.
    Non-negative, zero only when the correction matches every reference,
    and differentiable in the network parameters.
    """
    if len(reference_latents) == 0:
        raise ValueError("need at least one reference latent")
    corr = spn(image)
    total = corr.new_zeros(())
    for ref in reference_latents:
        if ref.shape != corr.shape:
            raise ValueError(f"reference shape {tuple(ref.shape)} != correction {tuple(corr.shape)}")
        total = total + torch.linalg.vector_norm(corr - ref)
    return total / len(reference_latents)

"""Encoder-decoder segmenter and the stylize-then-train pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .style import StyleMapper, stylize_images


@dataclass
class SegConfig:
    epochs: int = 30
    batch_size: int = 12
    learning_rate: float = 1e-3
    seed: int = 0
    loss_mix: float = 0.5
    base_width: int = 16
    channels: int = 3

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.loss_mix <= 1.0:
            raise ValueError("loss_mix must lie in [0,1]")
        if self.learning_rate <= 0 or self.base_width < 1:
            raise ValueError("learning_rate must be positive and base_width >= 1")


def _block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(c_out, c_out, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class UNetSegmenter(nn.Module):
    """3-level encoder-decoder with skip connections; sigmoid output.

    predict_prob maps [C,H,W] -> [H,W] probabilities in [0,1]; the
    spatial size is preserved (H and W must be divisible by 4 for the
    two pooling levels).
    """

    def __init__(self, channels: int = 3, base_width: int = 16):
        super().__init__()
        w = base_width
        self.channels = channels
        self.base_width = base_width
        self.enc1 = _block(channels, w)
        self.enc2 = _block(w, 2 * w)
        self.mid = _block(2 * w, 4 * w)
        self.dec2 = _block(4 * w + 2 * w, 2 * w)
        self.dec1 = _block(2 * w + w, w)
        self.out = nn.Conv2d(w, 1, 1)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ValueError(f"expected [B,{self.channels},H,W] input, got {tuple(x.shape)}")
        if x.shape[-2] % 4 or x.shape[-1] % 4:
            raise ValueError("spatial size must be divisible by 4")
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        m = self.mid(self.pool(e2))
        d2 = self.dec2(torch.cat([F.interpolate(m, scale_factor=2, mode="bilinear", align_corners=False), e2], dim=1))
        d1 = self.dec1(torch.cat([F.interpolate(d2, scale_factor=2, mode="bilinear", align_corners=False), e1], dim=1))
        return torch.sigmoid(self.out(d1))[:, 0]

    def predict_prob(self, image) -> np.ndarray:
        x = torch.as_tensor(np.asarray(image), dtype=torch.float32)
        if x.dim() != 3:
            raise ValueError(f"expected a single [C,H,W] image, got {tuple(x.shape)}")
        with torch.no_grad():
            prob = self(x[None])[0]
        return prob.numpy()


def seg_loss(pred_prob, gt_mask, loss_mix: float = 0.5):
    """loss_mix * cross-entropy + (1 - loss_mix) * (1 - soft overlap).

    Probabilities are clamped to [1e-7, 1-1e-7] inside the
    cross-entropy term only; the overlap term sees them raw, so the
    loss is 0 (up to the clamp's ~1e-7 floor) exactly when the
    prediction reproduces the binary mask.
    """
    pred = pred_prob if torch.is_tensor(pred_prob) else torch.as_tensor(np.asarray(pred_prob, dtype=np.float64))
    gt = gt_mask if torch.is_tensor(gt_mask) else torch.as_tensor(np.asarray(gt_mask))
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    if float(pred.detach().min()) < 0 or float(pred.detach().max()) > 1:
        raise ValueError("predictions must lie in [0,1]")
    gt = gt.to(pred.dtype)
    uniq = torch.unique(gt)
    if not bool(torch.isin(uniq, torch.tensor([0.0, 1.0], dtype=gt.dtype)).all()):
        raise ValueError("ground truth must be binary")
    p = pred.clamp(1e-7, 1.0 - 1e-7)
    bce = -(gt * torch.log(p) + (1.0 - gt) * torch.log(1.0 - p)).mean()
    denom = pred.sum() + gt.sum()
    overlap = 2.0 * (pred * gt).sum() / denom if float(denom.detach()) > 0 else torch.ones((), dtype=pred.dtype)
    return loss_mix * bce + (1.0 - loss_mix) * (1.0 - overlap)


def train_segmenter(images, masks, config: SegConfig) -> tuple[UNetSegmenter, list[float]]:
    """Seeded segmenter training; returns the model and per-epoch mean loss."""
    x_all = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    m_all = torch.as_tensor(np.asarray(masks)).to(torch.float32)
    if x_all.dim() != 4 or x_all.shape[1] != config.channels:
        raise ValueError(f"expected [N,{config.channels},H,W] images, got {tuple(x_all.shape)}")
    if m_all.dim() != 3 or m_all.shape[0] != x_all.shape[0] or m_all.shape[-2:] != x_all.shape[-2:]:
        raise ValueError("masks must be [N,H,W] aligned with images")
    n = x_all.shape[0]
    if n == 0:
        raise ValueError("empty training set")

    torch.manual_seed(config.seed)
    model = UNetSegmenter(channels=config.channels, base_width=config.base_width)
    gen = torch.Generator().manual_seed(config.seed + 1)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    history: list[float] = []

    model.train()
    for _ in range(config.epochs):
        perm = torch.randperm(n, generator=gen)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            pred = model(x_all[idx])
            loss = seg_loss(pred, m_all[idx], config.loss_mix)
            if not bool(torch.isfinite(loss)):
                raise RuntimeError(f"segmenter loss became non-finite at epoch {len(history)}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.item()))
        history.append(float(np.mean(epoch_losses)))
    model.eval()
    return model, history


def predict_mask(segmenter: UNetSegmenter, image, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Binary mask (prob strictly above threshold) plus the probability map."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly inside (0,1)")
    prob = segmenter.predict_prob(image)
    return prob > threshold, prob


def run_pipeline(
    train_images,
    train_masks,
    test_images,
    mapper: Optional[StyleMapper],
    seg_config: SegConfig,
    threshold: float = 0.5,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Optionally stylize the training set, train, predict on raw test images.

    Test images are never stylized: they already carry the target
    style. With mapper=None this is the plain train-then-predict
    baseline; both arms share the seed, so the stylization is the only
    varying factor.
    """
    imgs = np.asarray(train_images, dtype=np.float32)
    if mapper is not None:
        imgs = stylize_images(imgs, mapper)
    segmenter, _ = train_segmenter(imgs, train_masks, seg_config)
    return [predict_mask(segmenter, img, threshold) for img in np.asarray(test_images, dtype=np.float32)]

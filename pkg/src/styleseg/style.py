"""One-shot source-to-target style mapping over diffusion trajectories.

The mapper G sends a source-domain image to the target appearance:
encode the image's semantic code, run T1 deterministic forward steps
under the frozen source model, then T2 reverse steps under the target
denoiser conditioned on a learned target code, adding the structure
correction inside its injection window. The inverse pass F swaps the
roles (forward under the target branch, reverse under the source model
conditioned on the image's own code) and injects nothing.

Training optimizes the target code and the correction network with
three losses: embedding-direction alignment, round-trip cycle
consistency, and the structure-correction anchor.
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import torch
import torch.nn as nn

from .diffusion import (
    DiffAEModel,
    LatentState,
    SemanticCode,
    ddim_forward_step,
    ddim_reverse_step,
    encode_semantic,
    generate_conditioned,
)
from .embedding import ConvEmbedding, EmbedConfig, EmbeddingBackend, train_embedding
from .spn import SPN, inject, spn_loss


@dataclass
class StyleConfig:
    """Weights and trajectory lengths for mapper training.

    lambda1 weights the direction-alignment loss, lambda2 the cycle
    loss, lambda3 the structure-correction loss. T1 forward steps and
    T2 reverse steps per pass; iterations outer optimization steps.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    T1: int = 40
    T2: int = 40
    iterations: int = 400
    learning_rate: float = 1e-3
    seed: int = 0
    unfreeze_target_denoiser: bool = False
    inject_lo: int = 0
    inject_hi: Optional[int] = None

    def __post_init__(self) -> None:
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.T1 < 1 or self.T2 < 1:
            raise ValueError("T1 and T2 must be >= 1")
        if self.T2 > self.T1 + 1:
            raise ValueError("T2 may exceed T1 by at most 1 (reverse leg would pass t=0)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.inject_lo < 0 or (self.inject_hi is not None and self.inject_hi < self.inject_lo):
            raise ValueError("injection window requires 0 <= inject_lo <= inject_hi")


class StyleMapper:
    """Trained one-shot mapping: frozen source model + target branch.

    target_code and spn (and optionally target_denoiser) are the
    trained parts; source_model never changes. A trained mapper is
    immutable in use and safe for concurrent stylize calls.
    """

    def __init__(
        self,
        source_model: DiffAEModel,
        target_denoiser,
        target_code: torch.Tensor,
        spn: SPN,
        config: StyleConfig,
    ):
        self.source_model = source_model
        self.target_denoiser = target_denoiser
        self.target_code = target_code
        self.spn = spn
        self.config = config
        self.loss_history: list[dict[str, float]] = []

    @property
    def code(self) -> SemanticCode:
        return SemanticCode(self.target_code)


def _as_image_tensor(image) -> tuple[torch.Tensor, bool]:
    if isinstance(image, np.ndarray):
        return torch.as_tensor(image.astype(np.float32, copy=False)), True
    if torch.is_tensor(image):
        return image, False
    return torch.as_tensor(np.asarray(image, dtype=np.float32)), True


def _forward_leg(x, steps, denoiser, schedule, code, collect=False):
    state = LatentState(x, 1)
    latents = []
    for _ in range(steps):
        state = ddim_forward_step(state, denoiser, schedule, code)
        if collect:
            latents.append(state.x)
    return state, latents


def _reverse_leg(state, steps, denoiser, schedule, code, spn=None, correction=None):
    for _ in range(steps):
        if spn is not None:
            state = inject(state, correction, spn)
        state = ddim_reverse_step(state, denoiser, schedule, code)
    return state


def _check_legs(config: StyleConfig, schedule) -> None:
    if config.T1 > schedule.T - 1:
        raise ValueError(
            f"T1={config.T1} too deep: images enter at t=1, so T1 <= T-1 = {schedule.T - 1}"
        )
    if config.T2 > config.T1 + 1:
        raise ValueError(f"T2={config.T2} would step below t=0 (T1={config.T1})")


def map_to_target(mapper: StyleMapper, image: torch.Tensor) -> torch.Tensor:
    """The G pass. Differentiable; accepts [C,H,W] or [B,C,H,W]."""
    model = mapper.source_model
    _check_legs(mapper.config, model.schedule)
    z_in = encode_semantic(image, model)
    correction = mapper.spn(image)
    state, _ = _forward_leg(image, mapper.config.T1, model.denoiser, model.schedule, z_in)
    state = _reverse_leg(
        state,
        mapper.config.T2,
        mapper.target_denoiser,
        model.schedule,
        mapper.code,
        spn=mapper.spn,
        correction=correction,
    )
    return state.x


def map_to_source(mapper: StyleMapper, image: torch.Tensor) -> torch.Tensor:
    """The inverse pass F: target-branch encode, source-model decode, no injection."""
    model = mapper.source_model
    _check_legs(mapper.config, model.schedule)
    z_img = encode_semantic(image, model)
    state, _ = _forward_leg(image, mapper.config.T1, mapper.target_denoiser, model.schedule, mapper.code)
    state = _reverse_leg(state, mapper.config.T2, model.denoiser, model.schedule, z_img)
    return state.x


def stylize(image, mapper: StyleMapper):
    """Map one image (or a batch) to the target style. Deterministic.

    numpy in, numpy out; tensor in, tensor out. Output shape equals
    input shape for any shape-matched image, not only the training pair.
    """
    x, was_numpy = _as_image_tensor(image)
    if x.dim() not in (3, 4):
        raise ValueError(f"expected [C,H,W] or [B,C,H,W] image, got {tuple(x.shape)}")
    with torch.no_grad():
        out = map_to_target(mapper, x)
    return out.numpy() if was_numpy else out


def stylize_images(images, mapper: StyleMapper, batch_size: int = 16):
    """Stylize a stack of images in batches; preserves order and type."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    x, was_numpy = _as_image_tensor(images)
    if x.dim() != 4:
        raise ValueError(f"expected [N,C,H,W] images, got {tuple(x.shape)}")
    outs = []
    with torch.no_grad():
        for start in range(0, x.shape[0], batch_size):
            outs.append(map_to_target(mapper, x[start : start + batch_size]))
    out = torch.cat(outs) if outs else x[:0]
    return out.numpy() if was_numpy else out


def adv_loss(
    src_in: torch.Tensor,
    src_styled: torch.Tensor,
    tgt_in: torch.Tensor,
    tgt_styled: torch.Tensor,
) -> torch.Tensor:
    """Direction-alignment loss over four unit-norm embedding vectors.

    1 - cos(src_styled - src_in, tgt_styled - tgt_in), in [0, 2]:
    0 when the source image moved through embedding space parallel to
    the target direction, 2 when antiparallel. A zero direction vector
    is degenerate: the loss is 1 and a warning is emitted.
    """
    vecs = [src_in, src_styled, tgt_in, tgt_styled]
    dim = vecs[0].shape[-1]
    for v in vecs:
        if v.dim() != 1 or v.shape[-1] != dim:
            raise ValueError("embeddings must be 1-D vectors of equal dimension")
        if abs(float(torch.linalg.vector_norm(v.detach())) - 1.0) > 1e-3:
            raise ValueError("embeddings must be unit-norm")
    d_src = src_styled - src_in
    d_tgt = tgt_styled - tgt_in
    n_src = torch.linalg.vector_norm(d_src)
    n_tgt = torch.linalg.vector_norm(d_tgt)
    if float(n_src.detach()) < 1e-12 or float(n_tgt.detach()) < 1e-12:
        warnings.warn("degenerate direction vector in adv_loss; returning loss 1")
        return torch.ones((), dtype=src_in.dtype)
    cos = (d_src * d_tgt).sum() / (n_src * n_tgt)
    return 1.0 - cos


def cycle_loss(mapper: StyleMapper, x_source, y_target) -> torch.Tensor:
    """Round-trip consistency: |G(F(G(x))) - G(x)|_1 + |F(G(F(y))) - F(y)|_1 (means)."""
    x, _ = _as_image_tensor(x_source)
    y, _ = _as_image_tensor(y_target)
    gx = map_to_target(mapper, x)
    fy = map_to_source(mapper, y)
    term1 = (map_to_target(mapper, map_to_source(mapper, gx)) - gx).abs().mean()
    term2 = (map_to_source(mapper, map_to_target(mapper, fy)) - fy).abs().mean()
    for name, v in (("first round trip", term1), ("second round trip", term2)):
        if not bool(torch.isfinite(v)):
            raise RuntimeError(f"non-finite {name} in cycle loss")
    return term1 + term2


def total_style_loss(components: dict, config: StyleConfig):
    """Weighted total: lambda1*adv + lambda2*cycle + lambda3*spn.

    Returns the total and a record of the unweighted component values.
    A negative component is a programming error and aborts.
    """
    try:
        adv, cyc, spn_c = components["adv"], components["cycle"], components["spn"]
    except KeyError as e:
        raise ValueError(f"missing loss component {e}") from e
    record = {}
    for name, v in (("adv", adv), ("cycle", cyc), ("spn", spn_c)):
        val = float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        if not np.isfinite(val):
            raise ValueError(f"non-finite {name} component: {val}")
        if val < 0:
            raise ValueError(f"negative {name} component: {val}")
        record[name] = val
    total = config.lambda1 * adv + config.lambda2 * cyc + config.lambda3 * spn_c
    record["total"] = float(total.detach()) if isinstance(total, torch.Tensor) else float(total)
    return total, record


def train_style_mapper(
    x_source,
    y_target,
    source_model: DiffAEModel,
    config: StyleConfig,
    embedding: Optional[EmbeddingBackend] = None,
) -> StyleMapper:
    """One-shot mapper training from a single image per domain.

    Each iteration: draw fresh noise, generate a source-style sample
    conditioned on the source image's code, map it to the target style,
    and take one Adam step on the weighted three-part loss. The source
    model is frozen (its parameters are bit-identical afterwards); the
    trainables are the target code and the correction network, plus the
    target denoiser when the config unfreezes it. Seeded and
    reproducible: same inputs and seed give an identical mapper.

    With embedding=None a default backend is trained on the image pair.
    """
    x, _ = _as_image_tensor(x_source)
    y, _ = _as_image_tensor(y_target)
    if x.dim() != 3 or y.dim() != 3:
        raise ValueError("one-shot training takes exactly one [C,H,W] image per domain")
    if x.shape != y.shape:
        raise ValueError(f"domain images must share a shape, got {tuple(x.shape)} vs {tuple(y.shape)}")
    if config.lambda1 == 0 and config.lambda2 == 0 and config.lambda3 == 0:
        raise ValueError("at least one loss weight must be positive for a training run")
    schedule = source_model.schedule
    _check_legs(config, schedule)

    source_model.eval()
    source_model.freeze()
    if embedding is None:
        embedding = train_embedding(
            torch.stack([x, y]),
            EmbedConfig(channels=x.shape[0], epochs=60, batch_size=2, seed=config.seed),
        )

    target_denoiser = copy.deepcopy(source_model.denoiser)
    for p in target_denoiser.parameters():
        p.requires_grad_(config.unfreeze_target_denoiser)
    z_target = nn.Parameter(encode_semantic(y, source_model).z.detach().clone())
    spn = SPN(channels=x.shape[0], t_lo=config.inject_lo, t_hi=config.inject_hi)
    mapper = StyleMapper(source_model, target_denoiser, z_target, spn, config)

    trainables = [z_target, *spn.parameters()]
    if config.unfreeze_target_denoiser:
        trainables += list(target_denoiser.parameters())
    opt = torch.optim.Adam(trainables, lr=config.learning_rate)
    gen = torch.Generator().manual_seed(config.seed)

    z_src = encode_semantic(x, source_model)
    with torch.no_grad():
        # Anchor targets for the correction loss: the frozen source-model
        # forward trajectory of the input image. Constant across iterations.
        _, spn_targets = _forward_leg(x, config.T1, source_model.denoiser, schedule, z_src, collect=True)
        spn_targets = [t.detach() for t in spn_targets]

    for it in range(config.iterations):
        noise = torch.randn(x.shape, generator=gen, dtype=x.dtype)
        with torch.no_grad():
            x_gen = generate_conditioned(z_src, noise, source_model)

        gx = map_to_target(mapper, x_gen)
        pair = torch.stack([gx, y])
        f_pair = map_to_source(mapper, pair)
        g_pair = map_to_target(mapper, f_pair)
        fgx, fy = f_pair[0], f_pair[1]
        gfgx, gfy = g_pair[0], g_pair[1]
        fgfy = map_to_source(mapper, gfy)

        emb = embedding.embed(torch.stack([x_gen, gx, fy, y]))
        adv = adv_loss(emb[0], emb[1], emb[2], emb[3])
        cyc = (gfgx - gx).abs().mean() + (fgfy - fy).abs().mean()
        spn_c = spn_loss(spn, x, spn_targets)
        total, record = total_style_loss({"adv": adv, "cycle": cyc, "spn": spn_c}, config)
        if not bool(torch.isfinite(total)):
            raise RuntimeError(f"non-finite style loss at iteration {it}: {record}")

        opt.zero_grad()
        total.backward()
        opt.step()
        for p in trainables:
            if not bool(torch.isfinite(p).all()):
                raise RuntimeError(f"non-finite trainable parameter after iteration {it}")
        mapper.loss_history.append(record)

    return mapper

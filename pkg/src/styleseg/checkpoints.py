"""Format-tagged, byte-deterministic checkpoints (compressed-free npz archives).

Same model state always serializes to identical bytes, so repeated
seeded runs can be compared file-for-file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .diffusion import DiffAEConfig, DiffAEModel
from .networks import CondDenoiser
from .schedule import NoiseSchedule
from .segmentation import SegConfig, UNetSegmenter
from .spn import SPN
from .style import StyleConfig, StyleMapper

_HISTORY_COLUMNS = ("adv", "cycle", "spn", "total")


def content_hash(module: nn.Module) -> str:
    """sha256 over the module's parameter names, shapes, and bytes."""
    h = hashlib.sha256()
    for name, p in sorted(module.named_parameters()):
        arr = p.detach().cpu().numpy()
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(str(arr.dtype).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def _param_arrays(module: nn.Module, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}{name}": p.detach().cpu().numpy().copy() for name, p in module.named_parameters()}


def _load_params(module: nn.Module, store, prefix: str, path) -> None:
    with torch.no_grad():
        for name, p in module.named_parameters():
            key = f"{prefix}{name}"
            if key not in store:
                raise ValueError(f"{path}: missing parameter {key}")
            arr = np.asarray(store[key])
            if tuple(arr.shape) != tuple(p.shape):
                raise ValueError(f"{path}: parameter {key} has shape {arr.shape}, expected {tuple(p.shape)}")
            p.copy_(torch.as_tensor(arr))


def _save_npz(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    payload = {"__meta__": np.array(json.dumps(meta, sort_keys=True))}
    for key in sorted(arrays):
        payload[key] = arrays[key]
    with open(path, "wb") as f:
        np.savez(f, **payload)


def _read_npz(path, expected_format: str):
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    store = np.load(path, allow_pickle=False)
    if "__meta__" not in store:
        raise ValueError(f"{path}: not a recognized checkpoint (no metadata)")
    meta = json.loads(str(store["__meta__"]))
    if meta.get("format") != expected_format:
        raise ValueError(f"{path}: format {meta.get('format')!r}, expected {expected_format!r}")
    return store, meta


def save_diffae(model: DiffAEModel, path) -> None:
    meta = {
        "format": "styleseg.diffae",
        "version": 1,
        "config": asdict(model.config),
    }
    arrays = {"schedule.alpha_bar": model.schedule.alpha_bar}
    arrays.update(_param_arrays(model.encoder, "encoder."))
    arrays.update(_param_arrays(model.denoiser, "denoiser."))
    _save_npz(path, meta, arrays)


def load_diffae(path) -> DiffAEModel:
    store, meta = _read_npz(path, "styleseg.diffae")
    config = DiffAEConfig(**meta["config"])
    model = DiffAEModel(config, NoiseSchedule(np.asarray(store["schedule.alpha_bar"])))
    _load_params(model.encoder, store, "encoder.", path)
    _load_params(model.denoiser, store, "denoiser.", path)
    model.eval()
    return model


def save_mapper(mapper: StyleMapper, path) -> None:
    src_cfg = mapper.source_model.config
    meta = {
        "format": "styleseg.mapper",
        "version": 1,
        "source_hash": content_hash(mapper.source_model),
        "config": asdict(mapper.config),
        "denoiser": {
            "channels": src_cfg.image_channels,
            "width": src_cfg.denoiser_width,
            "blocks": src_cfg.denoiser_blocks,
            "code_dim": src_cfg.code_dim,
        },
        "history_columns": list(_HISTORY_COLUMNS),
    }
    history = np.array(
        [[rec[c] for c in _HISTORY_COLUMNS] for rec in mapper.loss_history], dtype=np.float64
    ).reshape(len(mapper.loss_history), len(_HISTORY_COLUMNS))
    arrays = {
        "target_code": mapper.target_code.detach().cpu().numpy().copy(),
        "loss_history": history,
    }
    arrays.update(_param_arrays(mapper.spn, "spn."))
    arrays.update(_param_arrays(mapper.target_denoiser, "target_denoiser."))
    _save_npz(path, meta, arrays)


def load_mapper(path, source_model: DiffAEModel) -> StyleMapper:
    store, meta = _read_npz(path, "styleseg.mapper")
    actual = content_hash(source_model)
    if meta["source_hash"] != actual:
        raise ValueError(
            f"{path}: source model mismatch (checkpoint references {meta['source_hash'][:12]}..., "
            f"given model hashes to {actual[:12]}...)"
        )
    config = StyleConfig(**meta["config"])
    den_meta = meta["denoiser"]
    target_denoiser = CondDenoiser(
        channels=den_meta["channels"],
        width=den_meta["width"],
        blocks=den_meta["blocks"],
        code_dim=den_meta["code_dim"],
    )
    _load_params(target_denoiser, store, "target_denoiser.", path)
    for p in target_denoiser.parameters():
        p.requires_grad_(False)
    spn = SPN(channels=den_meta["channels"], t_lo=config.inject_lo, t_hi=config.inject_hi)
    _load_params(spn, store, "spn.", path)
    for p in spn.parameters():
        p.requires_grad_(False)
    code = torch.as_tensor(np.asarray(store["target_code"]))
    mapper = StyleMapper(source_model, target_denoiser, code, spn, config)
    cols = meta["history_columns"]
    mapper.loss_history = [
        {c: float(v) for c, v in zip(cols, row)} for row in np.asarray(store["loss_history"])
    ]
    return mapper


def save_segmenter(model: UNetSegmenter, config: SegConfig, path) -> None:
    meta = {
        "format": "styleseg.segmenter",
        "version": 1,
        "config": asdict(config),
        "arch": {"channels": model.channels, "base_width": model.base_width},
    }
    _save_npz(path, meta, _param_arrays(model, ""))


def load_segmenter(path) -> tuple[UNetSegmenter, SegConfig]:
    store, meta = _read_npz(path, "styleseg.segmenter")
    config = SegConfig(**meta["config"])
    model = UNetSegmenter(channels=meta["arch"]["channels"], base_width=meta["arch"]["base_width"])
    _load_params(model, store, "", path)
    model.eval()
    return model, config

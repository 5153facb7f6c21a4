"""Flat key=value run configuration shared by every CLI command.

Every key has a default; a config file and --set overrides may only
touch known keys, and values are coerced to the default's type. The
fully resolved table is written into each run directory so any output
can be reproduced from its own provenance record.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .data import DomainStyle, LesionSpec, SynthConfig, default_source_style, default_target_style
from .diffusion import DiffAEConfig
from .embedding import EmbedConfig
from .segmentation import SegConfig
from .style import StyleConfig


def _style_keys(prefix: str, style: DomainStyle) -> dict[str, object]:
    out: dict[str, object] = {}
    for name in ("hue", "saturation", "value", "lesion_hue", "lesion_saturation", "lesion_value"):
        lo, hi = getattr(style, name)
        out[f"{prefix}.{name}_lo"] = float(lo)
        out[f"{prefix}.{name}_hi"] = float(hi)
    out[f"{prefix}.noise"] = float(style.noise)
    out[f"{prefix}.texture"] = style.texture
    return out


def _build_defaults() -> dict[str, object]:
    dif = DiffAEConfig()
    sty = StyleConfig()
    seg = SegConfig()
    emb = EmbedConfig()
    les = LesionSpec()
    out: dict[str, object] = {
        "seed": 0,
        "data.image_size": 64,
        "synth.count": 200,
        "synth.lesion.shape": les.shape,
        "synth.lesion.radius_lo": float(les.radius[0]),
        "synth.lesion.radius_hi": float(les.radius[1]),
        "synth.lesion.count_lo": int(les.count[0]),
        "synth.lesion.count_hi": int(les.count[1]),
        "diffae.code_dim": dif.code_dim,
        "diffae.denoiser_width": dif.denoiser_width,
        "diffae.denoiser_blocks": dif.denoiser_blocks,
        "diffae.encoder_width": dif.encoder_width,
        "diffae.timesteps": dif.T,
        "diffae.beta_start": dif.beta_start,
        "diffae.beta_end": dif.beta_end,
        "diffae.epochs": dif.epochs,
        "diffae.batch_size": dif.batch_size,
        "diffae.learning_rate": dif.learning_rate,
        "embed.dim": emb.dim,
        "embed.width": emb.width,
        "embed.epochs": emb.epochs,
        "embed.batch_size": emb.batch_size,
        "embed.learning_rate": emb.learning_rate,
        "embed.temperature": emb.temperature,
        "embed.noise_std": emb.noise_std,
        "style.lambda1": sty.lambda1,
        "style.lambda2": sty.lambda2,
        "style.lambda3": sty.lambda3,
        "style.forward_steps": sty.T1,
        "style.reverse_steps": sty.T2,
        "style.iterations": sty.iterations,
        "style.learning_rate": sty.learning_rate,
        "style.unfreeze_target_denoiser": sty.unfreeze_target_denoiser,
        "style.inject_lo": sty.inject_lo,
        "style.inject_hi": -1 if sty.inject_hi is None else sty.inject_hi,
        "style.train_diffae_if_missing": False,
        "stylize.batch_size": 16,
        "seg.epochs": seg.epochs,
        "seg.batch_size": seg.batch_size,
        "seg.learning_rate": seg.learning_rate,
        "seg.loss_mix": seg.loss_mix,
        "seg.base_width": seg.base_width,
        "eval.threshold": 0.5,
        "paths.images": "",
        "paths.diffae": "",
        "paths.mapper": "",
        "paths.segmenter": "",
        "paths.source_image": "",
        "paths.target_image": "",
        "paths.embed_corpus": "",
        "paths.input_dir": "",
        "paths.train_dir": "",
        "paths.test_dir": "",
        "paths.eval_csvs": "",
        "report.names": "",
    }
    out.update(_style_keys("synth.source", default_source_style()))
    out.update(_style_keys("synth.target", default_target_style()))
    return out


DEFAULTS = _build_defaults()


def _coerce(key: str, raw: str, default: object) -> object:
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"config key {key}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ValueError(f"config key {key}: expected a number, got {raw!r}") from None
    return raw


@dataclass
class RunConfig:
    """Resolved configuration: defaults plus file plus --set overrides."""

    values: dict[str, object] = field(default_factory=lambda: dict(DEFAULTS))

    def get(self, key: str):
        if key not in self.values:
            raise KeyError(f"unknown config key: {key}")
        return self.values[key]

    def set(self, key: str, raw: str) -> None:
        if key not in self.values:
            raise ValueError(f"unknown config key: {key}")
        self.values[key] = _coerce(key, raw, DEFAULTS[key])

    def path(self, key: str, required: bool = False) -> Path | None:
        """Path-valued key; empty string means unset."""
        raw = str(self.get(key))
        if not raw:
            if required:
                raise ValueError(f"config key {key} must be set for this command")
            return None
        return Path(raw)

    def serialize(self) -> str:
        lines = []
        for key in sorted(self.values):
            value = self.values[key]
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def parse_assignment(line: str) -> tuple[str, str]:
    if "=" not in line:
        raise ValueError(f"expected key=value, got {line!r}")
    key, _, value = line.partition("=")
    return key.strip(), value.strip()


def load_config(path=None, overrides: list[str] = (), seed: int | None = None) -> RunConfig:
    """Resolve defaults, then the config file, then --set pairs, then --seed."""
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        for lineno, raw_line in enumerate(path.read_text().splitlines(), start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                key, value = parse_assignment(line)
                cfg.set(key, value)
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
    for item in overrides:
        key, value = parse_assignment(item)
        cfg.set(key, value)
    if seed is not None:
        cfg.values["seed"] = int(seed)
    return cfg


def _domain_style(cfg: RunConfig, prefix: str) -> DomainStyle:
    def rng(name: str) -> tuple[float, float]:
        return (float(cfg.get(f"{prefix}.{name}_lo")), float(cfg.get(f"{prefix}.{name}_hi")))

    return DomainStyle(
        hue=rng("hue"),
        saturation=rng("saturation"),
        value=rng("value"),
        lesion_hue=rng("lesion_hue"),
        lesion_saturation=rng("lesion_saturation"),
        lesion_value=rng("lesion_value"),
        noise=float(cfg.get(f"{prefix}.noise")),
        texture=str(cfg.get(f"{prefix}.texture")),
    )


def synth_config(cfg: RunConfig) -> SynthConfig:
    return SynthConfig(
        count=int(cfg.get("synth.count")),
        image_size=int(cfg.get("data.image_size")),
        seed=int(cfg.get("seed")),
        source_style=_domain_style(cfg, "synth.source"),
        target_style=_domain_style(cfg, "synth.target"),
        lesion=LesionSpec(
            shape=str(cfg.get("synth.lesion.shape")),
            radius=(float(cfg.get("synth.lesion.radius_lo")), float(cfg.get("synth.lesion.radius_hi"))),
            count=(int(cfg.get("synth.lesion.count_lo")), int(cfg.get("synth.lesion.count_hi"))),
        ),
    )


def diffae_config(cfg: RunConfig) -> DiffAEConfig:
    return DiffAEConfig(
        code_dim=int(cfg.get("diffae.code_dim")),
        denoiser_width=int(cfg.get("diffae.denoiser_width")),
        denoiser_blocks=int(cfg.get("diffae.denoiser_blocks")),
        encoder_width=int(cfg.get("diffae.encoder_width")),
        T=int(cfg.get("diffae.timesteps")),
        beta_start=float(cfg.get("diffae.beta_start")),
        beta_end=float(cfg.get("diffae.beta_end")),
        epochs=int(cfg.get("diffae.epochs")),
        batch_size=int(cfg.get("diffae.batch_size")),
        learning_rate=float(cfg.get("diffae.learning_rate")),
        seed=int(cfg.get("seed")),
    )


def embed_config(cfg: RunConfig) -> EmbedConfig:
    return EmbedConfig(
        dim=int(cfg.get("embed.dim")),
        width=int(cfg.get("embed.width")),
        epochs=int(cfg.get("embed.epochs")),
        batch_size=int(cfg.get("embed.batch_size")),
        learning_rate=float(cfg.get("embed.learning_rate")),
        temperature=float(cfg.get("embed.temperature")),
        noise_std=float(cfg.get("embed.noise_std")),
        seed=int(cfg.get("seed")),
    )


def style_config(cfg: RunConfig) -> StyleConfig:
    hi = int(cfg.get("style.inject_hi"))
    return StyleConfig(
        lambda1=float(cfg.get("style.lambda1")),
        lambda2=float(cfg.get("style.lambda2")),
        lambda3=float(cfg.get("style.lambda3")),
        T1=int(cfg.get("style.forward_steps")),
        T2=int(cfg.get("style.reverse_steps")),
        iterations=int(cfg.get("style.iterations")),
        learning_rate=float(cfg.get("style.learning_rate")),
        seed=int(cfg.get("seed")),
        unfreeze_target_denoiser=bool(cfg.get("style.unfreeze_target_denoiser")),
        inject_lo=int(cfg.get("style.inject_lo")),
        inject_hi=None if hi < 0 else hi,
    )


def seg_config(cfg: RunConfig) -> SegConfig:
    return SegConfig(
        epochs=int(cfg.get("seg.epochs")),
        batch_size=int(cfg.get("seg.batch_size")),
        learning_rate=float(cfg.get("seg.learning_rate")),
        seed=int(cfg.get("seed")),
        loss_mix=float(cfg.get("seg.loss_mix")),
        base_width=int(cfg.get("seg.base_width")),
    )

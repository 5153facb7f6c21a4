"""Dataset loading, deterministic splits, and the synthetic two-domain generator."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image


@dataclass
class Sample:
    id: str
    image: np.ndarray  # [3,H,W] float32 in [0,1]
    mask: Optional[np.ndarray]  # [H,W] bool, aligned with image
    domain_tag: str

    def __post_init__(self) -> None:
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be [3,H,W], got {self.image.shape}")
        if self.mask is not None and self.mask.shape != self.image.shape[1:]:
            raise ValueError(f"mask shape {self.mask.shape} != image spatial shape {self.image.shape[1:]}")


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered (id, image_path, mask_path, domain_tag, checksum) rows plus a combined checksum."""

    entries: tuple
    checksum: str


@dataclass
class DomainStyle:
    """Appearance of one domain: background HSV ranges, lesion HSV ranges, noise level."""

    hue: tuple[float, float]
    saturation: tuple[float, float]
    value: tuple[float, float]
    lesion_hue: tuple[float, float]
    lesion_saturation: tuple[float, float]
    lesion_value: tuple[float, float]
    noise: float = 0.03
    texture: str = "smooth"

    def __post_init__(self) -> None:
        for name in ("hue", "saturation", "value", "lesion_hue", "lesion_saturation", "lesion_value"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"degenerate {name} range ({lo}, {hi})")
        if self.noise < 0:
            raise ValueError("noise level must be nonnegative")
        if self.texture != "smooth":
            raise ValueError(f"unknown texture family {self.texture!r}")


@dataclass
class LesionSpec:
    shape: str = "blob"  # "blob" or "ellipse"
    radius: tuple[float, float] = (0.10, 0.22)  # fraction of image size
    count: tuple[int, int] = (1, 3)

    def __post_init__(self) -> None:
        lo, hi = self.radius
        if not 0.0 < lo <= hi < 0.5:
            raise ValueError(f"degenerate radius range ({lo}, {hi})")
        clo, chi = self.count
        if not 1 <= clo <= chi:
            raise ValueError(f"degenerate count range ({clo}, {chi})")
        if self.shape not in ("blob", "ellipse"):
            raise ValueError(f"unknown shape family {self.shape!r}")


def default_source_style() -> DomainStyle:
    return DomainStyle(
        hue=(0.26, 0.36),
        saturation=(0.35, 0.55),
        value=(0.62, 0.80),
        lesion_hue=(0.05, 0.12),
        lesion_saturation=(0.50, 0.70),
        lesion_value=(0.22, 0.38),
        noise=0.03,
    )


def default_target_style() -> DomainStyle:
    return DomainStyle(
        hue=(0.88, 0.98),
        saturation=(0.45, 0.65),
        value=(0.36, 0.52),
        lesion_hue=(0.55, 0.65),
        lesion_saturation=(0.50, 0.70),
        lesion_value=(0.12, 0.26),
        noise=0.06,
    )


@dataclass
class SynthConfig:
    count: int = 200
    image_size: int = 64
    seed: int = 0
    source_style: DomainStyle = field(default_factory=default_source_style)
    target_style: DomainStyle = field(default_factory=default_target_style)
    lesion: LesionSpec = field(default_factory=LesionSpec)

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.image_size < 8:
            raise ValueError("image_size must be >= 8")


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    h = np.mod(h, 1.0) * 6.0
    i = np.floor(h).astype(int) % 6
    f = h - np.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b])


def _rgb_to_hue(rgb: np.ndarray) -> np.ndarray:
    # rgb [3,H,W] -> hue [H,W]; used by tests to verify domain palettes
    r, g, b = rgb[0], rgb[1], rgb[2]
    mx = np.max(rgb, axis=0)
    mn = np.min(rgb, axis=0)
    d = mx - mn
    hue = np.zeros_like(mx)
    nz = d > 0
    rmax = nz & (mx == r)
    gmax = nz & (mx == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    hue[rmax] = ((g - b)[rmax] / d[rmax]) % 6.0
    hue[gmax] = (b - r)[gmax] / d[gmax] + 2.0
    hue[bmax] = (r - g)[bmax] / d[bmax] + 4.0
    return hue / 6.0


def _smooth_field(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.normal(0.0, 1.0, (max(size // 8, 2), max(size // 8, 2)))
    img = Image.fromarray(coarse.astype(np.float32), mode="F")
    return np.asarray(img.resize((size, size), Image.BILINEAR), dtype=np.float64)


def _lesion_support(
    rng: np.random.Generator,
    size: int,
    spec: LesionSpec,
) -> tuple[np.ndarray, np.ndarray]:
    # Returns the boolean support and a [0,1] interior-depth map used for shading.
    n = int(rng.integers(spec.count[0], spec.count[1] + 1))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    support = np.zeros((size, size), dtype=bool)
    depth = np.zeros((size, size), dtype=np.float64)
    for _ in range(n):
        r = rng.uniform(*spec.radius) * size
        margin = r + 2.0
        cy = rng.uniform(margin, size - margin)
        cx = rng.uniform(margin, size - margin)
        aspect = rng.uniform(0.6, 1.0)
        angle = rng.uniform(0.0, np.pi)
        ca, sa = np.cos(angle), np.sin(angle)
        u = (xx - cx) * ca + (yy - cy) * sa
        w = -(xx - cx) * sa + (yy - cy) * ca
        rho = np.sqrt((u / r) ** 2 + (w / (r * aspect)) ** 2)
        if spec.shape == "blob":
            theta = np.arctan2(w, u)
            wobble = np.zeros_like(theta)
            for m in (2, 3):
                wobble += rng.uniform(0.0, 0.15) * np.cos(m * theta + rng.uniform(0.0, 2 * np.pi))
            limit = 1.0 + wobble
        else:
            limit = np.ones_like(rho)
        inside = rho <= limit
        support |= inside
        depth = np.maximum(depth, np.where(inside, np.clip(1.0 - rho / np.maximum(limit, 1e-9), 0.0, 1.0), 0.0))
    return support, depth


def _render_sample(rng: np.random.Generator, style: DomainStyle, spec: LesionSpec, size: int) -> tuple[np.ndarray, np.ndarray]:
    support, depth = _lesion_support(rng, size, spec)

    h = np.full((size, size), rng.uniform(*style.hue))
    s = np.full((size, size), rng.uniform(*style.saturation))
    v = rng.uniform(*style.value) + style.noise * 2.0 * _smooth_field(rng, size)

    h[support] = rng.uniform(*style.lesion_hue)
    s[support] = rng.uniform(*style.lesion_saturation)
    lesion_v = rng.uniform(*style.lesion_value)
    v[support] = lesion_v - 0.08 * depth[support]

    rgb = _hsv_to_rgb(h, np.clip(s, 0, 1), np.clip(v, 0, 1))
    rgb = rgb + style.noise * 0.5 * rng.normal(0.0, 1.0, rgb.shape)
    return np.clip(rgb, 0.0, 1.0).astype(np.float32), support


def generate_synthetic(config: SynthConfig) -> tuple[list[Sample], list[Sample]]:
    """Seeded two-domain dataset: same lesion geometry distribution, distinct styles."""
    out = []
    for tag, style, stream in (
        ("source", config.source_style, 0),
        ("target", config.target_style, 1),
    ):
        rng = np.random.default_rng([config.seed, stream])
        samples = []
        for i in range(config.count):
            image, mask = _render_sample(rng, style, config.lesion, config.image_size)
            samples.append(Sample(id=f"{tag[:3]}_{i:04d}", image=image, mask=mask, domain_tag=tag))
        out.append(samples)
    return out[0], out[1]


def split(samples: Sequence[Sample], fractions: Sequence[float], seed: int) -> list[list[Sample]]:
    """Deterministic disjoint partition with sizes proportional to fractions."""
    if len(samples) == 0:
        raise ValueError("cannot split an empty sample list")
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.size == 0 or (fr <= 0).any():
        raise ValueError("fractions must be positive")
    if abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fr.sum()}")
    n = len(samples)
    order = np.random.default_rng(seed).permutation(n)
    edges = np.round(np.cumsum(fr) * n).astype(int)
    edges[-1] = n
    parts, start = [], 0
    for e in edges:
        parts.append([samples[i] for i in order[start:e]])
        start = e
    return parts


def _quantize(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def _sample_checksum(img_q: np.ndarray, mask_q: Optional[np.ndarray]) -> str:
    h = hashlib.sha256()
    h.update(img_q.tobytes())
    if mask_q is not None:
        h.update(mask_q.tobytes())
    return h.hexdigest()


def save_images(samples, out_dir) -> DatasetManifest:
    """Write 8-bit images (and masks) plus a checksummed manifest CSV.

    Accepts Sample lists or bare [3,H,W] arrays. Values are quantized
    once to 8 bits; re-saving loaded output reproduces identical bytes.
    """
    out_dir = Path(out_dir)
    items: list[Sample] = []
    for i, s in enumerate(samples):
        if isinstance(s, Sample):
            items.append(s)
        else:
            arr = np.asarray(s, dtype=np.float32)
            items.append(Sample(id=f"img_{i:04d}", image=arr, mask=None, domain_tag=""))
    ids = [s.id for s in items]
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")

    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    if any(s.mask is not None for s in items):
        (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    entries = []
    combined = hashlib.sha256()
    for s in items:
        img_q = _quantize(s.image)
        img_path = out_dir / "images" / f"{s.id}.png"
        Image.fromarray(np.transpose(img_q, (1, 2, 0)), mode="RGB").save(img_path)
        mask_path = ""
        mask_q = None
        if s.mask is not None:
            mask_q = np.where(s.mask, 255, 0).astype(np.uint8)
            mask_path = str(out_dir / "masks" / f"{s.id}.png")
            Image.fromarray(mask_q, mode="L").save(mask_path)
        checksum = _sample_checksum(img_q, mask_q)
        combined.update(checksum.encode())
        entries.append((s.id, str(img_path), mask_path, s.domain_tag, checksum))

    manifest = DatasetManifest(entries=tuple(entries), checksum=combined.hexdigest())
    with open(out_dir / "manifest.csv", "w", newline="") as f:
        f.write("id,image_path,mask_path,domain_tag,checksum\n")
        for row in entries:
            f.write(",".join(row) + "\n")
    return manifest


def load_dataset(root_dir, expected_size: int = 256) -> list[Sample]:
    """Load image/mask pairs from <root>/images and optional <root>/masks.

    Images resize bilinearly to expected_size x expected_size and scale
    to [0,1]; masks resize nearest-neighbor and binarize at value > 127.
    Samples come back sorted by id, so loading is order-deterministic.
    """
    root = Path(root_dir)
    img_dir = root / "images"
    if not img_dir.is_dir():
        raise FileNotFoundError(f"missing images directory: {img_dir}")
    mask_dir = root / "masks"
    files = sorted(p for p in img_dir.iterdir() if p.is_file())
    if not files:
        raise ValueError(f"no image files in {img_dir}")

    samples = []
    for path in files:
        try:
            with Image.open(path) as im:
                im = im.convert("RGB")
                if im.size != (expected_size, expected_size):
                    im = im.resize((expected_size, expected_size), Image.BILINEAR)
                image = np.transpose(np.asarray(im, dtype=np.float32) / 255.0, (2, 0, 1))
        except Exception as e:
            raise ValueError(f"cannot decode image file {path}: {e}") from e
        mask = None
        mask_path = mask_dir / path.name
        if mask_path.exists():
            try:
                with Image.open(mask_path) as mm:
                    mm = mm.convert("L")
                    if mm.size != (expected_size, expected_size):
                        mm = mm.resize((expected_size, expected_size), Image.NEAREST)
                    mask = np.asarray(mm) > 127
            except Exception as e:
                raise ValueError(f"cannot decode mask file {mask_path}: {e}") from e
        samples.append(Sample(id=path.stem, image=image, mask=mask, domain_tag=root.name))
    return samples


def load_image(path, expected_size: int = 256) -> np.ndarray:
    """Load one RGB image file to a [3,H,W] float32 array in [0,1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image file not found: {path}")
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (expected_size, expected_size):
                im = im.resize((expected_size, expected_size), Image.BILINEAR)
            return np.transpose(np.asarray(im, dtype=np.float32) / 255.0, (2, 0, 1))
    except FileNotFoundError:
        raise
    except Exception as e:
        raise ValueError(f"cannot decode image file {path}: {e}") from e


def images_array(samples: Sequence[Sample]) -> np.ndarray:
    """Stack sample images into [N,3,H,W]."""
    return np.stack([s.image for s in samples])


def masks_array(samples: Sequence[Sample]) -> np.ndarray:
    """Stack sample masks into [N,H,W]; every sample must carry one."""
    missing = [s.id for s in samples if s.mask is None]
    if missing:
        raise ValueError(f"samples without masks: {missing[:5]}")
    return np.stack([s.mask for s in samples])

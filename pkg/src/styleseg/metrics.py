"""Segmentation quality metrics.

Conventions, applied consistently and mirrored by the test oracles:
- Thresholded metrics binarize with a strict comparison (prob > threshold).
- dice/iou of two empty masks is 1; specificity with no true negatives
  possible (ground truth all-foreground) is 1.
- weighted F: beta = 1, 7x7 Gaussian window with sigma = 5 and zero
  padding, background errors substituted from the nearest foreground
  pixel (integer squared distances, row-major first match on ties);
  empty ground truth scores 1 for an all-zero prediction, else 0.
- S: alpha = 0.5, population statistics (ddof = 0), ground-truth
  centroid rounded to the nearest integer, empty quadrants carry zero
  weight, final value clamped to [0,1]; degenerate ground truth scores
  1 - mean(prob) when empty and mean(prob) when full.
- E: thresholds k/K for k = 0..K-1 (K = 256 by default), alignment of
  mean-centered binary maps, quadratic enhancement averaged over all
  pixels, maximum over thresholds; for degenerate ground truth the
  per-threshold score is the fraction of pixels the binarized
  prediction gets right.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy.signal import convolve2d

EPS = float(np.finfo(np.float64).eps)

CSV_COLUMNS = ("dice", "iou", "specificity", "fbw", "s_alpha", "e_phi_max", "mae")


def _as_mask(m, name: str) -> np.ndarray:
    a = np.asarray(m)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array")
    if a.dtype == bool:
        return a
    if np.issubdtype(a.dtype, np.number):
        if np.isin(a, (0, 1)).all():
            return a.astype(bool)
        raise ValueError(f"{name} must be binary (0/1 or bool)")
    raise TypeError(f"{name} has unsupported dtype {a.dtype}")


def _as_prob(p, name: str = "prediction") -> np.ndarray:
    a = np.asarray(p, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0,1]")
    return a


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricReport:
    dice: float
    iou: float
    specificity: float
    f_beta_w: float
    s_alpha: float
    e_phi_max: float
    mae: float

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{f.name} = {v} outside [0,1]")

    def values(self) -> tuple[float, ...]:
        return (self.dice, self.iou, self.specificity, self.f_beta_w, self.s_alpha, self.e_phi_max, self.mae)

    @classmethod
    def mean(cls, reports: Sequence["MetricReport"]) -> "MetricReport":
        if not reports:
            raise ValueError("cannot average zero reports")
        cols = np.array([r.values() for r in reports], dtype=np.float64)
        return cls(*[float(v) for v in cols.mean(axis=0)])


def confusion(pred, gt) -> ConfusionCounts:
    p = _as_mask(pred, "pred")
    g = _as_mask(gt, "gt")
    _check_shapes(p, g)
    tp = int(np.count_nonzero(p & g))
    tn = int(np.count_nonzero(~p & ~g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def dice(pred, gt) -> float:
    c = confusion(pred, gt)
    denom = 2 * c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else 2.0 * c.tp / denom


def iou(pred, gt) -> float:
    c = confusion(pred, gt)
    denom = c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else c.tp / denom


def specificity(pred, gt) -> float:
    c = confusion(pred, gt)
    denom = c.tn + c.fp
    return 1.0 if denom == 0 else c.tn / denom


def mae(prob, gt) -> float:
    p = _as_prob(prob)
    g = _as_mask(gt, "gt")
    _check_shapes(p, g)
    return float(np.abs(p - g.astype(np.float64)).mean())


def _gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def _nearest_foreground(E: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # For each background pixel: the error at its nearest foreground
    # pixel and the distance to it. Ties resolve to the first
    # foreground pixel in row-major order.
    fy, fx = np.nonzero(gt)
    by, bx = np.nonzero(~gt)
    Et = E.copy()
    dist = np.zeros(by.size, dtype=np.float64)
    if by.size == 0:
        return Et, dist
    chunk = max(1, 2_000_000 // max(fy.size, 1))
    for s in range(0, by.size, chunk):
        yy, xx = by[s : s + chunk], bx[s : s + chunk]
        d2 = (yy[:, None] - fy[None, :]) ** 2 + (xx[:, None] - fx[None, :]) ** 2
        idx = np.argmin(d2, axis=1)
        Et[yy, xx] = E[fy[idx], fx[idx]]
        dist[s : s + chunk] = np.sqrt(d2[np.arange(idx.size), idx])
    return Et, dist


def weighted_fbeta(prob, gt, beta: float = 1.0) -> float:
    """Spatially weighted F-measure.

    Errors on the background are substituted from the nearest
    foreground pixel before Gaussian smoothing, and background errors
    are amplified with a distance-decay factor, so mistakes near the
    object cost more than mistakes far away.
    """
    p = _as_prob(prob)
    g = _as_mask(gt, "gt")
    _check_shapes(p, g)
    if not g.any():
        return 1.0 if not p.any() else 0.0

    E = np.abs(p - g.astype(np.float64))
    Et, dist_bg = _nearest_foreground(E, g)
    EA = convolve2d(Et, _gaussian_kernel(), mode="same", boundary="fill", fillvalue=0)
    min_e_ea = np.where(g & (EA < E), EA, E)
    B = np.ones_like(E)
    B[~g] = 2.0 - np.exp(math.log(0.5) / 5.0 * dist_bg)
    Ew = min_e_ea * B

    n_fg = float(g.sum())
    tpw = n_fg - Ew[g].sum()
    fpw = Ew[~g].sum()
    recall = 1.0 - Ew[g].mean()
    precision = tpw / (EPS + tpw + fpw)
    b2 = beta * beta
    return float((1.0 + b2) * recall * precision / (EPS + recall + b2 * precision))


def _object_score(x: np.ndarray) -> float:
    m = float(x.mean())
    s = float(x.std())
    return 2.0 * m / (m * m + 1.0 + s + EPS)


def _region_ssim(p: np.ndarray, g: np.ndarray) -> float:
    gf = g.astype(np.float64)
    x, y = float(p.mean()), float(gf.mean())
    sx, sy = float(p.var()), float(gf.var())
    sxy = float(((p - x) * (gf - y)).mean())
    a = 4.0 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a != 0.0:
        return a / (b + EPS)
    return 1.0 if b == 0.0 else 0.0


def s_measure(prob, gt, alpha: float = 0.5) -> float:
    """Structural similarity: object-aware and region-aware terms mixed by alpha."""
    p = _as_prob(prob)
    g = _as_mask(gt, "gt")
    _check_shapes(p, g)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0,1]")
    if not g.any():
        return float(np.clip(1.0 - p.mean(), 0.0, 1.0))
    if g.all():
        return float(np.clip(p.mean(), 0.0, 1.0))

    mu = float(g.mean())
    s_object = mu * _object_score(p[g]) + (1.0 - mu) * _object_score(1.0 - p[~g])

    rows, cols = np.nonzero(g)
    cy = int(round(float(rows.mean())))
    cx = int(round(float(cols.mean())))
    s_region = 0.0
    for rs, cs in (
        (slice(0, cy), slice(0, cx)),
        (slice(0, cy), slice(cx, None)),
        (slice(cy, None), slice(0, cx)),
        (slice(cy, None), slice(cx, None)),
    ):
        pq, gq = p[rs, cs], g[rs, cs]
        if pq.size:
            s_region += (pq.size / g.size) * _region_ssim(pq, gq)

    return float(np.clip(alpha * s_object + (1.0 - alpha) * s_region, 0.0, 1.0))


def _enhanced(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    den = a * a + b * b
    align = np.where(den > 0, 2.0 * a * b / np.where(den > 0, den, 1.0), 0.0)
    return (align + 1.0) ** 2 / 4.0


def e_measure_max(prob, gt, thresholds: int = 256) -> float:
    """Enhanced-alignment score, maximized over binarization thresholds."""
    p = _as_prob(prob)
    g = _as_mask(gt, "gt")
    _check_shapes(p, g)
    if thresholds < 1:
        raise ValueError("thresholds must be >= 1")

    n = g.size
    taus = np.arange(thresholds, dtype=np.float64) / thresholds
    fg_sorted = np.sort(p[g])
    bg_sorted = np.sort(p[~g])
    tp = fg_sorted.size - np.searchsorted(fg_sorted, taus, side="right")
    fp = bg_sorted.size - np.searchsorted(bg_sorted, taus, side="right")
    fn = fg_sorted.size - tp
    tn = bg_sorted.size - fp

    if not g.any():
        return float((tn / n).max())
    if g.all():
        return float((tp / n).max())

    mu_g = fg_sorted.size / n
    mu_f = (tp + fp) / n
    a_f, a_b = 1.0 - mu_g, -mu_g
    scores = (
        tp * _enhanced(np.full_like(mu_f, a_f), 1.0 - mu_f)
        + fn * _enhanced(np.full_like(mu_f, a_f), -mu_f)
        + fp * _enhanced(np.full_like(mu_f, a_b), 1.0 - mu_f)
        + tn * _enhanced(np.full_like(mu_f, a_b), -mu_f)
    ) / n
    return float(scores.max())


def evaluate_all(prob, gt, threshold: float = 0.5) -> MetricReport:
    """All seven metrics; the overlap metrics binarize at the threshold."""
    p = _as_prob(prob)
    g = _as_mask(gt, "gt")
    _check_shapes(p, g)
    binary = p > threshold
    return MetricReport(
        dice=dice(binary, g),
        iou=iou(binary, g),
        specificity=specificity(binary, g),
        f_beta_w=weighted_fbeta(p, g),
        s_alpha=s_measure(p, g),
        e_phi_max=e_measure_max(p, g),
        mae=mae(p, g),
    )


def _load_gray(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def evaluate_directories(
    pred_dir,
    gt_dir,
    threshold: float = 0.5,
) -> tuple[list[str], list[MetricReport], MetricReport]:
    """Evaluate matching-filename mask pairs from two directories.

    Predictions are read as 8-bit grayscale probability maps (v/255);
    ground truth binarizes at value > 127. Returns ids, per-sample
    reports, and the fieldwise mean report.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"not a directory: {d}")
    names = sorted(f.name for f in pred_dir.iterdir() if f.is_file())
    if not names:
        raise ValueError(f"no prediction files in {pred_dir}")
    ids, reports = [], []
    for name in names:
        gt_path = gt_dir / name
        if not gt_path.exists():
            raise FileNotFoundError(f"no ground-truth file matching {name} in {gt_dir}")
        prob = _load_gray(pred_dir / name).astype(np.float64) / 255.0
        gt = _load_gray(gt_path) > 127
        reports.append(evaluate_all(prob, gt, threshold))
        ids.append(Path(name).stem)
    return ids, reports, MetricReport.mean(reports)


def write_report_csv(path, ids: Sequence[str], reports: Sequence[MetricReport]) -> None:
    """Per-sample CSV: id column followed by the seven metric columns."""
    if len(ids) != len(reports):
        raise ValueError("ids and reports must have equal length")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("id",) + CSV_COLUMNS)
        for sid, rep in zip(ids, reports):
            w.writerow([sid] + [f"{v:.10f}" for v in rep.values()])


def write_mean_csv(path, report: MetricReport) -> None:
    """Single-row CSV with exactly the seven metric columns."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        w.writerow([f"{v:.10f}" for v in report.values()])

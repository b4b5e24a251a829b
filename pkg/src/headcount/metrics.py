"""Counting metrics (MAE, MSE) and map-quality metrics (PSNR, SSIM).

MAE/MSE follow the crowd-counting convention: per-image predicted vs
actual counts, with "MSE" denoting the root of the mean squared error
(the magnitudes reported across the literature are RMSE under that name).

PSNR and SSIM compare density maps after both are divided by their own
norm factors and scaled so the ground-truth peak maps to 1.0. Identical
maps return the 120 dB cap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .c3dm import load_c3dm
from .density import DensityMap
from .errors import DataError
from .labels import count as map_count
from .labels import denormalize_labels

PSNR_CAP_DB = 120.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

__all__ = [
    "CountPair",
    "EvalReport",
    "mae",
    "mse",
    "psnr",
    "ssim",
    "evaluate_run",
    "PSNR_CAP_DB",
]


@dataclass(frozen=True)
class CountPair:
    """One image's predicted and actual person counts."""

    image_id: str
    predicted: float
    actual: float

    def __post_init__(self) -> None:
        if self.actual < 0:
            raise DataError(f"{self.image_id}: actual count must be >= 0")


@dataclass
class EvalReport:
    """Aggregate evaluation results over a prediction/ground-truth pairing."""

    n_images: int
    mae: float
    mse: float
    psnr: float | None = None
    ssim: float | None = None
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "mae": self.mae,
            "mse": self.mse,
            "psnr": self.psnr,
            "ssim": self.ssim,
            "flags": list(self.flags),
        }

    def to_table(self) -> str:
        rows = [
            ("n_images", str(self.n_images)),
            ("mae", f"{self.mae:.4f}"),
            ("mse", f"{self.mse:.4f}"),
            ("psnr_db", f"{self.psnr:.4f}" if self.psnr is not None else "-"),
            ("ssim", f"{self.ssim:.6f}" if self.ssim is not None else "-"),
            ("flags", ",".join(self.flags) if self.flags else "-"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def mae(pairs: list[CountPair]) -> float:
    """Mean absolute count error."""
    if not pairs:
        raise DataError("mae over an empty pair list")
    return math.fsum(abs(p.predicted - p.actual) for p in pairs) / len(pairs)


def mse(pairs: list[CountPair]) -> float:
    """Root-mean-square count error (the quantity reported as "MSE")."""
    if not pairs:
        raise DataError("mse over an empty pair list")
    return math.sqrt(math.fsum((p.predicted - p.actual) ** 2 for p in pairs) / len(pairs))


def _peak_scaled(pred: DensityMap, gt: DensityMap) -> tuple[np.ndarray, np.ndarray, bool]:
    """Denormalize both maps and scale so the ground-truth peak is 1.0.

    Returns (pred_scaled, gt_scaled, degenerate_gt); when gt is all-zero
    the scale falls back to pred's peak (degenerate flag set).
    """
    if pred.values.shape != gt.values.shape:
        raise DataError(
            f"shape mismatch: pred {pred.values.shape} vs gt {gt.values.shape}"
        )
    p = denormalize_labels(pred).values
    g = denormalize_labels(gt).values
    peak = g.max()
    degenerate = peak <= 0.0
    if degenerate:
        peak = p.max()
        if peak <= 0.0:
            return p, g, True
    return p / peak, g / peak, degenerate


def psnr(pred: DensityMap, gt: DensityMap) -> float:
    """Peak signal-to-noise ratio in dB between two density maps.

    Both maps are scaled by 1/max(gt), so the signal peak is 1.0;
    identical maps (and the all-zero/all-zero case) return the cap.
    """
    p, g, _ = _peak_scaled(pred, gt)
    diff = p - g
    msd = float(np.mean(diff * diff))
    if msd == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / msd), PSNR_CAP_DB)


def _window_1d() -> np.ndarray:
    half = (SSIM_WINDOW - 1) // 2
    off = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(off * off) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a normalized 1-D window."""
    v = sliding_window_view(img, g.size, axis=0) @ g
    return sliding_window_view(v, g.size, axis=1) @ g


def ssim(pred: DensityMap, gt: DensityMap) -> float:
    """Mean local structural similarity between two density maps.

    11x11 Gaussian window (sigma 1.5), C1=(0.01*L)^2, C2=(0.03*L)^2 with
    dynamic range L = 1 after peak scaling; local statistics are taken
    over windows fully inside the maps (valid mode).
    """
    p, g, _ = _peak_scaled(pred, gt)
    if min(p.shape) < SSIM_WINDOW:
        raise DataError(
            f"maps must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for ssim, "
            f"got {p.shape}"
        )
    w = _window_1d()
    mu_p = _filter_valid(p, w)
    mu_g = _filter_valid(g, w)
    var_p = _filter_valid(p * p, w) - mu_p * mu_p
    var_g = _filter_valid(g * g, w) - mu_g * mu_g
    cov = _filter_valid(p * g, w) - mu_p * mu_g
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    smap = ((2.0 * mu_p * mu_g + c1) * (2.0 * cov + c2)) / (
        (mu_p * mu_p + mu_g * mu_g + c1) * (var_p + var_g + c2)
    )
    return float(np.clip(smap.mean(), -1.0, 1.0))


def _scan_c3dm(dirpath: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(dirpath.glob("*.c3dm"))}


def evaluate_run(
    pred_dir: str | Path,
    gt_dir: str | Path,
    with_quality: bool = False,
    *,
    per_image_csv: str | Path | None = None,
) -> EvalReport:
    """Score a directory of predicted maps against ground truth.

    Maps are matched by image_id (the C3DM file stem); any id present on
    only one side is an error. Counts cancel norm factors, so normalized
    predictions evaluate identically to raw ones. When requested, PSNR and
    SSIM are averaged per-image over the maps exactly as stored (the flags
    record that scale). Optionally writes a per-image CSV.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds = _scan_c3dm(pred_dir)
    gts = _scan_c3dm(gt_dir)
    missing_pred = sorted(gts.keys() - preds.keys())
    missing_gt = sorted(preds.keys() - gts.keys())
    if missing_pred or missing_gt:
        parts = []
        if missing_pred:
            parts.append(f"missing predictions for: {', '.join(missing_pred)}")
        if missing_gt:
            parts.append(f"missing ground truth for: {', '.join(missing_gt)}")
        raise DataError("; ".join(parts))
    if not preds:
        raise DataError(f"no .c3dm files found in {pred_dir} and {gt_dir}")

    flags: list[str] = []
    pairs: list[CountPair] = []
    psnrs: list[float] = []
    ssims: list[float] = []
    for image_id in sorted(preds):
        pmap = load_c3dm(preds[image_id])
        gmap = load_c3dm(gts[image_id])
        pairs.append(CountPair(image_id, map_count(pmap), map_count(gmap)))
        if with_quality:
            _, _, degenerate = _peak_scaled(pmap, gmap)
            if degenerate:
                flags.append(f"all_zero_gt:{image_id}")
            psnrs.append(psnr(pmap, gmap))
            ssims.append(ssim(pmap, gmap))

    report = EvalReport(
        n_images=len(pairs),
        mae=mae(pairs),
        mse=mse(pairs),
        psnr=math.fsum(psnrs) / len(psnrs) if psnrs else None,
        ssim=math.fsum(ssims) / len(ssims) if ssims else None,
        flags=flags,
    )
    if with_quality:
        report.flags.append("quality_scale:stored_maps")

    if per_image_csv is not None:
        with open(per_image_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "predicted", "actual", "abs_err"])
            for pair in pairs:
                writer.writerow(
                    [pair.image_id, repr(pair.predicted), repr(pair.actual),
                     repr(abs(pair.predicted - pair.actual))]
                )
    return report

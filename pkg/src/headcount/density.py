"""Density map rendering with fixed or geometry-adaptive Gaussian kernels.

Every annotated point deposits a Gaussian kernel into the output raster.
Kernels that overlap the raster border are clipped and the in-bounds
portion renormalized, so each point contributes exactly 1.0 to the map
sum and the rendered map's total equals the crowd count.

In adaptive mode the per-point sigma is proportional to the mean distance
to the k nearest annotated neighbors (sigma_i = beta * dbar_i, capped),
so kernels shrink in dense regions and widen in sparse ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError
from .ingest import AnnotationSet

__all__ = [
    "KernelMode",
    "KernelSpec",
    "DensityMap",
    "gaussian_kernel",
    "knn_mean_distance",
    "render",
]


class KernelMode(Enum):
    FIXED = "fixed"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class KernelSpec:
    """Parameters of the per-point Gaussian kernels.

    Fixed mode uses a fixed_size x fixed_size window with fixed_sigma.
    Adaptive mode uses sigma_i = min(beta * mean-kNN-distance_i, sigma_cap)
    with a window half-extent of ceil(truncation_radius * sigma_i); an
    isolated point (no neighbor geometry) falls back to fixed_sigma.
    sigma_cap defaults to fixed_size, keeping adaptive kernels from
    ballooning around isolated heads.
    """

    mode: KernelMode = KernelMode.FIXED
    fixed_size: int = 15
    fixed_sigma: float = 4.0
    knn_k: int = 3
    beta: float = 0.3
    sigma_cap: float | None = None
    truncation_radius: float = 3.0

    def __post_init__(self) -> None:
        if self.fixed_size < 1 or self.fixed_size % 2 == 0:
            raise DataError(f"fixed_size must be odd and >= 1, got {self.fixed_size}")
        if self.fixed_sigma <= 0:
            raise DataError(f"fixed_sigma must be > 0, got {self.fixed_sigma}")
        if self.knn_k < 1:
            raise DataError(f"knn_k must be >= 1, got {self.knn_k}")
        if self.beta <= 0:
            raise DataError(f"beta must be > 0, got {self.beta}")
        if self.sigma_cap is None:
            object.__setattr__(self, "sigma_cap", float(self.fixed_size))
        if self.sigma_cap <= 0:
            raise DataError(f"sigma_cap must be > 0, got {self.sigma_cap}")
        if self.truncation_radius <= 0:
            raise DataError(f"truncation_radius must be > 0, got {self.truncation_radius}")

    @classmethod
    def fixed(cls, size: int = 15, sigma: float = 4.0) -> "KernelSpec":
        return cls(mode=KernelMode.FIXED, fixed_size=size, fixed_sigma=sigma)

    @classmethod
    def adaptive(
        cls,
        k: int = 3,
        beta: float = 0.3,
        sigma_cap: float | None = None,
        fixed_sigma: float = 4.0,
    ) -> "KernelSpec":
        return cls(
            mode=KernelMode.ADAPTIVE,
            knn_k=k,
            beta=beta,
            sigma_cap=sigma_cap,
            fixed_sigma=fixed_sigma,
        )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "fixed_size": self.fixed_size,
            "fixed_sigma": self.fixed_sigma,
            "knn_k": self.knn_k,
            "beta": self.beta,
            "sigma_cap": self.sigma_cap,
            "truncation_radius": self.truncation_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        d = dict(d)
        if "mode" in d:
            d["mode"] = KernelMode(d["mode"])
        return cls(**d)


@dataclass
class DensityMap:
    """A 2-D non-negative raster whose sum encodes the crowd count.

    norm_factor is the scalar currently multiplied into the values
    (1.0 for raw ground truth); counts divide it back out.
    """

    values: np.ndarray
    norm_factor: float = 1.0

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DataError(f"density map must be 2-D, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"density map must be non-empty, got shape {v.shape}")
        if (v < 0).any():
            raise DataError("density map values must be non-negative")
        self.values = v

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """A size x size isotropic Gaussian, renormalized to sum to 1.

    The kernel is sampled at integer offsets from the center cell and is
    exactly symmetric under horizontal flip, vertical flip and transpose.
    """
    if size < 1 or size % 2 == 0:
        raise DataError(f"kernel size must be odd and >= 1, got {size}")
    if not sigma > 0:
        raise DataError(f"sigma must be > 0, got {sigma}")
    half = (size - 1) // 2
    off = np.arange(-half, half + 1, dtype=np.float64)
    sq = off * off
    k = np.exp(-(sq[:, None] + sq[None, :]) / (2.0 * sigma * sigma))
    return k / k.sum()


def knn_mean_distance(points: np.ndarray | list, k: int) -> np.ndarray:
    """Mean Euclidean distance from each point to its k nearest other points.

    When fewer than k other points exist the mean runs over all available
    others. A single-point input has no neighbor geometry at all; its entry
    is NaN, which flags the degenerate case to callers (render substitutes
    the fixed-kernel sigma).
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.empty(0, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DataError(f"points must have shape (n, 2), got {pts.shape}")
    n = pts.shape[0]
    if n == 1:
        return np.array([np.nan])
    kq = min(k + 1, n)
    dists, _ = cKDTree(pts).query(pts, k=kq)
    if dists.ndim == 1:
        dists = dists[:, None]
    neigh = dists[:, 1:]  # drop self (distance 0, sorted first)
    return neigh.sum(axis=1) / neigh.shape[1]


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _deposit(out: np.ndarray, kernel: np.ndarray, cy: int, cx: int, renorm: bool) -> None:
    """Add a kernel centered at (cy, cx), clipping to the raster.

    The in-bounds slice is renormalized to sum 1 whenever it was clipped
    (or unconditionally when renorm is set), so the point's contribution
    to the map total is exactly one head.
    """
    h, w = out.shape
    kh, kw = kernel.shape
    ry, rx = (kh - 1) // 2, (kw - 1) // 2
    y0, y1 = cy - ry, cy + ry + 1
    x0, x1 = cx - rx, cx + rx + 1
    sy0, sy1 = max(y0, 0), min(y1, h)
    sx0, sx1 = max(x0, 0), min(x1, w)
    piece = kernel[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0]
    clipped = piece.shape != kernel.shape
    if clipped or renorm:
        piece = piece / piece.sum()
    out[sy0:sy1, sx0:sx1] += piece


def render(
    ann: AnnotationSet,
    spec: KernelSpec,
    out_shape: tuple[int, int] | None = None,
) -> DensityMap:
    """Render head points into a density map whose sum equals the count.

    When out_shape differs from the annotation dimensions, points are
    scaled by the per-axis ratios first; adaptive sigmas are computed from
    the scaled geometry. Kernel centers are the points rounded to the
    nearest cell and clamped into the raster, so border points still
    contribute exactly one head each.
    """
    if out_shape is None:
        out_shape = (ann.height, ann.width)
    oh, ow = int(out_shape[0]), int(out_shape[1])
    if oh < 1 or ow < 1:
        raise DataError(f"output shape must be positive, got {out_shape}")

    out = np.zeros((oh, ow), dtype=np.float64)
    pts = ann.points_array()
    if pts.size and not np.isfinite(pts).all():
        raise DataError(f"{ann.image_id}: non-finite point coordinates")
    if pts.size and (oh, ow) != (ann.height, ann.width):
        pts = pts * np.array([ow / ann.width, oh / ann.height])

    n = pts.shape[0]
    if n == 0:
        return DensityMap(out)

    cx = np.clip([_round_half_up(x) for x in pts[:, 0]], 0, ow - 1)
    cy = np.clip([_round_half_up(y) for y in pts[:, 1]], 0, oh - 1)

    if spec.mode is KernelMode.FIXED:
        base = gaussian_kernel(spec.fixed_size, spec.fixed_sigma)
        for i in range(n):
            _deposit(out, base, int(cy[i]), int(cx[i]), renorm=False)
    else:
        dbar = knn_mean_distance(pts, spec.knn_k)
        sigmas = np.where(np.isnan(dbar), spec.fixed_sigma,
                          np.minimum(spec.beta * dbar, spec.sigma_cap))
        for i in range(n):
            s = float(sigmas[i])
            if s <= 0.0:  # coincident points: degenerate delta
                out[int(cy[i]), int(cx[i])] += 1.0
                continue
            half = int(math.ceil(spec.truncation_radius * s))
            off = np.arange(-half, half + 1, dtype=np.float64)
            sq = off * off
            kern = np.exp(-(sq[:, None] + sq[None, :]) / (2.0 * s * s))
            _deposit(out, kern, int(cy[i]), int(cx[i]), renorm=True)

    return DensityMap(out)

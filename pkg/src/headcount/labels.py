"""Label transformations: sum-preserving down-sampling and normalization.

Down-sampling shrinks a density map by an integer factor while keeping its
sum: each output cell is the mean of its factor x factor block multiplied
by factor**2 (for the usual 1/8-scale targets that multiplier is 64),
which is exactly the block sum. Note that training against down-sampled
targets degrades the PSNR/SSIM of predicted maps; the eval report flags
provenance so consumers can tell which convention was used.

Normalization multiplies ground truth by a constant (100 by default) as a
convergence trick; the factor rides along in the map's norm_factor and is
cancelled whenever a count is extracted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import DensityMap
from .errors import DataError

__all__ = [
    "DownsampleSpec",
    "NormalizationSpec",
    "downsample_sum_preserving",
    "normalize_labels",
    "denormalize_labels",
    "count",
]


@dataclass(frozen=True)
class DownsampleSpec:
    factor: int = 8

    def __post_init__(self) -> None:
        if self.factor < 1:
            raise DataError(f"downsample factor must be >= 1, got {self.factor}")


@dataclass(frozen=True)
class NormalizationSpec:
    label_factor: float = 100.0

    def __post_init__(self) -> None:
        if not self.label_factor > 0:
            raise DataError(f"label_factor must be > 0, got {self.label_factor}")


def downsample_sum_preserving(dmap: DensityMap, spec: DownsampleSpec) -> DensityMap:
    """Shrink by spec.factor per axis without changing the sum.

    Output cells are block sums (block mean times factor**2), so the
    implied count is preserved; norm_factor is carried through unchanged.
    """
    f = spec.factor
    if f == 1:
        return DensityMap(dmap.values.copy(), norm_factor=dmap.norm_factor)
    h, w = dmap.values.shape
    if h % f or w % f:
        raise DataError(f"dimensions {h}x{w} not divisible by factor {f}")
    blocks = dmap.values.reshape(h // f, f, w // f, f).sum(axis=(1, 3))
    return DensityMap(blocks, norm_factor=dmap.norm_factor)


def normalize_labels(dmap: DensityMap, spec: NormalizationSpec) -> DensityMap:
    """Scale all values by the label factor and record it in norm_factor."""
    if dmap.norm_factor != 1.0:
        raise DataError(
            f"map already normalized (norm_factor={dmap.norm_factor}); "
            f"denormalize first"
        )
    return DensityMap(dmap.values * spec.label_factor, norm_factor=spec.label_factor)


def denormalize_labels(dmap: DensityMap) -> DensityMap:
    """Undo normalization: divide values by norm_factor and reset it to 1."""
    if dmap.norm_factor == 0.0:
        raise DataError("norm_factor is zero")
    if dmap.norm_factor == 1.0:
        return DensityMap(dmap.values.copy(), norm_factor=1.0)
    return DensityMap(dmap.values / dmap.norm_factor, norm_factor=1.0)


def count(dmap: DensityMap) -> float:
    """The crowd count implied by a map: sum(values) / norm_factor.

    Maps can exceed a million cells, so the reduction is compensated:
    per-row pairwise sums (error-bounded) folded with exact fsum.
    """
    row_sums = np.sum(dmap.values, axis=1, dtype=np.float64)
    return math.fsum(row_sums) / dmap.norm_factor

"""Array-level bindings over the headcount toolkit for training loops.

Everything here is a thin delegate to the host package: the value added
is an array-in/array-out surface (no annotation files, no manifests) and
a read-only float32 view suitable for feeding straight into a tensor
framework. Numerical behavior is the host's, bit for bit, because the
host operations do the computing; the heavy loops all live in numpy and
scipy kernels, which release the interpreter lock internally, so binding
calls can overlap across threads.

Inputs are never mutated: point arrays are copied on entry and exposed
buffers are marked read-only.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from headcount import (
    AnnotationSet,
    DataError,
    DensityMap,
    DownsampleSpec,
    KernelSpec,
    NormalizationSpec,
    Point,
    ResizeRule,
)
from headcount import count as _count
from headcount import downsample_sum_preserving as _downsample
from headcount import load_c3dm as _load_c3dm
from headcount import mae as _mae
from headcount import mse as _mse
from headcount import normalize_labels as _normalize
from headcount import plan_resize as _plan_resize
from headcount import render as _render
from headcount import save_c3dm as _save_c3dm
from headcount.metrics import CountPair

__version__ = "0.1.0"

__all__ = [
    "BoundDensityMap",
    "py_render",
    "py_downsample",
    "py_normalize",
    "py_count",
    "py_mae_mse",
    "py_plan_resize",
    "save_c3dm",
    "load_c3dm",
]


class BoundDensityMap:
    """A density map with a read-only float32 buffer view.

    The full-precision map is kept internally so that every operation
    delegated to the host package is exactly the host's result; `values`
    is a cached float32 copy for zero-friction tensor hand-off. The view
    is contiguous, row-major, and refuses writes.
    """

    __slots__ = ("_dmap", "_view")

    def __init__(self, dmap: DensityMap):
        if not isinstance(dmap, DensityMap):
            raise DataError(f"expected a DensityMap, got {type(dmap).__name__}")
        self._dmap = dmap
        self._view: np.ndarray | None = None

    @property
    def values(self) -> np.ndarray:
        """Contiguous row-major float32 view; length = height * width."""
        if self._view is None:
            v = np.ascontiguousarray(self._dmap.values, dtype=np.float32)
            v.flags.writeable = False
            self._view = v
        return self._view

    @property
    def norm_factor(self) -> float:
        return self._dmap.norm_factor

    @property
    def height(self) -> int:
        return self._dmap.height

    @property
    def width(self) -> int:
        return self._dmap.width

    @property
    def shape(self) -> tuple[int, int]:
        return (self._dmap.height, self._dmap.width)

    def to_density_map(self) -> DensityMap:
        """A full-precision copy (the caller may mutate it freely)."""
        return DensityMap(self._dmap.values.copy(), norm_factor=self._dmap.norm_factor)

    def __repr__(self) -> str:
        return (
            f"BoundDensityMap({self.height}x{self.width}, "
            f"norm_factor={self.norm_factor!r})"
        )


def _points_array(points) -> np.ndarray:
    pts = np.array(points, dtype=np.float64, copy=True)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DataError(f"points must have shape (n, 2), got {pts.shape}")
    return pts


def py_render(
    points,
    height: int,
    width: int,
    *,
    mode: str = "fixed",
    fixed_size: int = 15,
    fixed_sigma: float = 4.0,
    knn_k: int = 3,
    beta: float = 0.3,
    sigma_cap: float | None = None,
    truncation_radius: float = 3.0,
) -> BoundDensityMap:
    """Render an (n, 2) point array into a (height, width) density map.

    Same contract as the host render: the map's sum equals the number of
    points, out-of-raster centers are pulled to the border cell, and
    `mode` selects fixed or geometry-adaptive kernels.
    """
    pts = _points_array(points)
    spec = KernelSpec.from_dict({
        "mode": mode,
        "fixed_size": fixed_size,
        "fixed_sigma": fixed_sigma,
        "knn_k": knn_k,
        "beta": beta,
        "sigma_cap": sigma_cap,
        "truncation_radius": truncation_radius,
    })
    ann = AnnotationSet(
        image_id="bound",
        width=int(width),
        height=int(height),
        points=[Point(float(x), float(y)) for x, y in pts],
    )
    return BoundDensityMap(_render(ann, spec))


def py_downsample(dmap: BoundDensityMap, factor: int) -> BoundDensityMap:
    """Sum-preserving block reduction by `factor` along both axes."""
    return BoundDensityMap(_downsample(dmap._dmap, DownsampleSpec(factor)))


def py_normalize(dmap: BoundDensityMap, label_factor: float = 100.0) -> BoundDensityMap:
    """Scale values by label_factor, recording it in norm_factor."""
    return BoundDensityMap(_normalize(dmap._dmap, NormalizationSpec(label_factor)))


def py_count(dmap: BoundDensityMap) -> float:
    """The person count implied by the map (norm factor divided out)."""
    return _count(dmap._dmap)


def py_mae_mse(predicted: Sequence[float], actual: Sequence[float]) -> tuple[float, float]:
    """Counting MAE and (root-mean-square) MSE over paired counts."""
    pred = np.asarray(predicted, dtype=np.float64)
    act = np.asarray(actual, dtype=np.float64)
    if pred.shape != act.shape or pred.ndim != 1:
        raise DataError(
            f"predicted and actual must be equal-length 1-D, got "
            f"{pred.shape} vs {act.shape}"
        )
    pairs = [
        CountPair(str(i), float(p), float(a))
        for i, (p, a) in enumerate(zip(pred, act))
    ]
    return _mae(pairs), _mse(pairs)


def py_plan_resize(
    src: tuple[int, int],
    *,
    kind: str = "ratio_preserving",
    fixed: tuple[int, int] | None = None,
    max_side: int | None = 1024,
    divisor: int = 16,
    upscale: bool = False,
) -> dict:
    """Plan a resize for a (height, width) source; returns the plan as a dict."""
    rule = ResizeRule.from_dict({
        "kind": kind,
        "fixed": list(fixed) if fixed is not None else None,
        "max_side": max_side if kind == "ratio_preserving" else None,
        "divisor": divisor,
        "upscale": upscale,
    })
    return _plan_resize((int(src[0]), int(src[1])), rule).to_dict()


def save_c3dm(dmap: BoundDensityMap | DensityMap, path: str | Path) -> None:
    """Write a map in the host's binary format (byte-compatible)."""
    inner = dmap._dmap if isinstance(dmap, BoundDensityMap) else dmap
    _save_c3dm(inner, path)


def load_c3dm(path: str | Path) -> BoundDensityMap:
    """Read a map written by this package or the host CLI."""
    return BoundDensityMap(_load_c3dm(path))

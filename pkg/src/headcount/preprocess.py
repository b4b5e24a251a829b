"""Per-dataset resize rules, divisibility-by-16 enforcement, batch plans.

Image geometry only: pixel resampling is the CLI layer's job, and density
maps are always regenerated from transformed points, never interpolated,
because interpolation breaks exact count conservation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError
from .ingest import AnnotationSet, Point

DIVISOR = 16

__all__ = [
    "DIVISOR",
    "ResizeKind",
    "ResizeRule",
    "ResizePlan",
    "BatchStrategy",
    "BatchPlan",
    "plan_resize",
    "apply_resize",
    "plan_batch",
    "crop_annotations",
]


class ResizeKind(Enum):
    FIXED_SIZE = "fixed_size"
    RATIO_PRESERVING = "ratio_preserving"


@dataclass(frozen=True)
class ResizeRule:
    """A dataset's sizing policy.

    FIXED_SIZE forces every image to `fixed` (height, width). The
    RATIO_PRESERVING policy scales uniformly so the longer side equals
    max_side, then rounds both dimensions down to multiples of `divisor`.
    Images already within max_side are left at scale 1 unless `upscale`
    is set (sparse annotations inflate interpolation artifacts, so
    enlarging is opt-in).
    """

    kind: ResizeKind
    fixed: tuple[int, int] | None = None
    max_side: int | None = None
    divisor: int = DIVISOR
    upscale: bool = False

    def __post_init__(self) -> None:
        if self.divisor < 1:
            raise DataError(f"divisor must be >= 1, got {self.divisor}")
        if self.kind is ResizeKind.FIXED_SIZE:
            if self.fixed is None:
                raise DataError("fixed-size rule requires `fixed` dimensions")
            fh, fw = self.fixed
            if fh % self.divisor or fw % self.divisor:
                raise DataError(
                    f"fixed dimensions {self.fixed} not divisible by {self.divisor}"
                )
        else:
            if self.max_side is None:
                raise DataError("ratio-preserving rule requires `max_side`")
            if self.max_side < self.divisor:
                raise DataError(f"max_side must be >= {self.divisor}")

    @classmethod
    def fixed_size(cls, height: int, width: int) -> "ResizeRule":
        return cls(kind=ResizeKind.FIXED_SIZE, fixed=(height, width))

    @classmethod
    def ratio_preserving(cls, max_side: int = 1024, upscale: bool = False) -> "ResizeRule":
        return cls(kind=ResizeKind.RATIO_PRESERVING, max_side=max_side, upscale=upscale)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "fixed": list(self.fixed) if self.fixed else None,
            "max_side": self.max_side,
            "divisor": self.divisor,
            "upscale": self.upscale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResizeRule":
        d = dict(d)
        d["kind"] = ResizeKind(d["kind"])
        if d.get("fixed") is not None:
            d["fixed"] = tuple(d["fixed"])
        return cls(**d)


@dataclass(frozen=True)
class ResizePlan:
    """A rule applied to one image: source and target dims plus per-axis scales."""

    src: tuple[int, int]
    dst: tuple[int, int]
    scale_y: float
    scale_x: float

    def __post_init__(self) -> None:
        if self.dst[0] % DIVISOR or self.dst[1] % DIVISOR:
            raise DataError(f"plan target {self.dst} not divisible by {DIVISOR}")
        if self.scale_y != self.dst[0] / self.src[0] or self.scale_x != self.dst[1] / self.src[1]:
            raise DataError("plan scales inconsistent with src/dst dimensions")

    @classmethod
    def of(cls, src: tuple[int, int], dst: tuple[int, int]) -> "ResizePlan":
        return cls(
            src=(int(src[0]), int(src[1])),
            dst=(int(dst[0]), int(dst[1])),
            scale_y=dst[0] / src[0],
            scale_x=dst[1] / src[1],
        )

    def to_dict(self) -> dict:
        return {
            "src": list(self.src),
            "dst": list(self.dst),
            "scale_y": self.scale_y,
            "scale_x": self.scale_x,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResizePlan":
        return cls(
            src=tuple(d["src"]),
            dst=tuple(d["dst"]),
            scale_y=d["scale_y"],
            scale_x=d["scale_x"],
        )


class BatchStrategy(Enum):
    CROP_TO_MIN = "crop_to_min"
    PAD_TO_MAX = "pad_to_max"


@dataclass(frozen=True)
class BatchPlan:
    """How a batch of differently sized images becomes one fixed-size tensor."""

    strategy: BatchStrategy
    n: int
    target: tuple[int, int]
    per_image_offsets: tuple[tuple[int, int], ...]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "n": self.n,
            "target": list(self.target),
            "per_image_offsets": [list(o) for o in self.per_image_offsets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BatchPlan":
        return cls(
            strategy=BatchStrategy(d["strategy"]),
            n=d["n"],
            target=tuple(d["target"]),
            per_image_offsets=tuple(tuple(o) for o in d["per_image_offsets"]),
        )


def _floor_multiple(v: float, divisor: int) -> int:
    return (int(math.floor(v)) // divisor) * divisor


def plan_resize(src: tuple[int, int], rule: ResizeRule) -> ResizePlan:
    """Apply a sizing rule to one image's (height, width).

    Ratio-preserving plans scale uniformly so the longer side hits
    max_side (downscale always; upscale only when the rule says so), then
    round each dimension down to a multiple of the divisor. A dimension
    that would round to zero is held at the divisor instead, so extreme
    aspect ratios still produce a usable raster.
    """
    sh, sw = int(src[0]), int(src[1])
    if sh < 1 or sw < 1:
        raise DataError(f"source dimensions must be positive, got {src}")

    if rule.kind is ResizeKind.FIXED_SIZE:
        assert rule.fixed is not None
        return ResizePlan.of((sh, sw), rule.fixed)

    assert rule.max_side is not None
    d = rule.divisor
    long_side = max(sh, sw)
    scaling = long_side > rule.max_side or rule.upscale
    if not scaling and (sh < d or sw < d):
        raise DataError(
            f"source {src} smaller than {d} in one dimension and the rule "
            f"does not upscale"
        )
    if scaling:
        # numerator is an exact integer, so the long side lands exactly
        # on max_side before rounding
        dh = max(d, _floor_multiple(sh * rule.max_side / long_side, d))
        dw = max(d, _floor_multiple(sw * rule.max_side / long_side, d))
    else:
        dh = max(d, _floor_multiple(sh, d))
        dw = max(d, _floor_multiple(sw, d))
    return ResizePlan.of((sh, sw), (dh, dw))


def apply_resize(ann: AnnotationSet, plan: ResizePlan) -> AnnotationSet:
    """Rescale an annotation set onto a plan's target dimensions.

    Every point is scaled per axis; the count never changes. Coordinates
    that round onto the target boundary are nudged back in-bounds to keep
    the half-open invariant.
    """
    if plan.src != (ann.height, ann.width):
        raise DataError(
            f"{ann.image_id}: plan source {plan.src} does not match "
            f"annotations {(ann.height, ann.width)}"
        )
    dh, dw = plan.dst
    if plan.dst == plan.src:
        points = list(ann.points)
    else:
        xmax = math.nextafter(float(dw), 0.0)
        ymax = math.nextafter(float(dh), 0.0)
        points = [
            Point(min(p.x * plan.scale_x, xmax), min(p.y * plan.scale_y, ymax))
            for p in ann.points
        ]
    return AnnotationSet(ann.image_id, width=dw, height=dh, points=points)


def plan_batch(
    sizes: list[tuple[int, int]],
    n: int,
    strategy: BatchStrategy,
    seed: int | None = None,
) -> BatchPlan:
    """Plan the collation of n images into one batch tensor.

    CROP_TO_MIN crops every image to the batch's elementwise-minimum size;
    crop origins are drawn uniformly from the valid range with the seed
    (bit-reproducible) or centered when no seed is given. PAD_TO_MAX pads
    to the elementwise max rounded up to the divisor, image at the
    top-left, zero fill.
    """
    if n < 1 or not sizes:
        raise DataError("batch must contain at least one image")
    if len(sizes) != n:
        raise DataError(f"got {len(sizes)} sizes for batch size {n}")
    for h, w in sizes:
        if h % DIVISOR or w % DIVISOR:
            raise DataError(f"batch size ({h}, {w}) not divisible by {DIVISOR}")

    if strategy is BatchStrategy.CROP_TO_MIN:
        th = min(h for h, _ in sizes)
        tw = min(w for _, w in sizes)
        if seed is None:
            offsets = tuple(((h - th) // 2, (w - tw) // 2) for h, w in sizes)
        else:
            rng = np.random.default_rng(seed)
            offsets = tuple(
                (int(rng.integers(0, h - th + 1)), int(rng.integers(0, w - tw + 1)))
                for h, w in sizes
            )
        return BatchPlan(strategy, n, (th, tw), offsets)

    th = -(-max(h for h, _ in sizes) // DIVISOR) * DIVISOR
    tw = -(-max(w for _, w in sizes) // DIVISOR) * DIVISOR
    return BatchPlan(strategy, n, (th, tw), tuple((0, 0) for _ in sizes))


def crop_annotations(
    ann: AnnotationSet,
    origin: tuple[int, int],
    target: tuple[int, int],
) -> AnnotationSet:
    """Crop to the half-open window [origin, origin + target).

    Points on the low edge are kept, points on the high edge dropped;
    kept points are translated by -origin. The count may decrease.
    """
    oy, ox = int(origin[0]), int(origin[1])
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise DataError(f"crop target must be positive, got {target}")
    if oy < 0 or ox < 0 or oy + th > ann.height or ox + tw > ann.width:
        raise DataError(
            f"{ann.image_id}: crop window {origin}+{target} exceeds "
            f"{(ann.height, ann.width)}"
        )
    kept = [
        Point(p.x - ox, p.y - oy)
        for p in ann.points
        if ox <= p.x < ox + tw and oy <= p.y < oy + th
    ]
    return AnnotationSet(ann.image_id, width=tw, height=th, points=kept)

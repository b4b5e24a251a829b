"""Loading and validation of head-point annotations.

The interchange format is plain JSON (UTF-8):

    {"image_id": str, "width": int, "height": int, "points": [[x, y], ...]}

A dataset manifest is a JSON array of ``{"annotation": path, "image": path}``
pairs; relative paths are resolved against the manifest's directory.

Coordinates are continuous (sub-pixel): x is the column axis, y the row
axis. Valid points satisfy ``0 <= x < width`` and ``0 <= y < height``.
Out-of-bounds points are either clamped to the nearest in-bounds coordinate
(default) or rejected (strict mode); real annotation files contain boundary
noise, and dropping heads would silently change the crowd count downstream.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)


class DatasetId(Enum):
    """The six supported benchmark datasets plus an escape hatch."""

    UCF50 = "UCF50"
    SHT_A = "SHT_A"
    SHT_B = "SHT_B"
    WE = "WE"
    QNRF = "QNRF"
    GCC = "GCC"
    CUSTOM = "CUSTOM"


@dataclass(frozen=True)
class Point:
    """One annotated head position. x = column, y = row, both sub-pixel."""

    x: float
    y: float


@dataclass
class AnnotationSet:
    """An image's head points plus the image dimensions they live in."""

    image_id: str
    width: int
    height: int
    points: list[Point] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.image_id:
            raise DataError("image_id must be non-empty")
        if self.width < 1 or self.height < 1:
            raise DataError(
                f"{self.image_id}: dimensions must be positive, "
                f"got {self.width}x{self.height}"
            )

    @property
    def count(self) -> int:
        return len(self.points)

    def points_array(self) -> np.ndarray:
        """Points as a float64 array of shape (n, 2) in (x, y) order."""
        if not self.points:
            return np.empty((0, 2), dtype=np.float64)
        return np.array([(p.x, p.y) for p in self.points], dtype=np.float64)


def _clamp_coord(v: float, bound: float) -> float:
    """Clamp v into [0, bound): the nearest representable in-bounds value."""
    if v < 0.0:
        return 0.0
    if v >= bound:
        return math.nextafter(bound, 0.0)
    return v


def parse_annotations(data: Any, *, strict: bool = False) -> tuple[AnnotationSet, int]:
    """Validate a decoded annotation JSON object.

    Returns the annotation set and the number of out-of-bounds points that
    were clamped. In strict mode any out-of-bounds point raises ``DataError``
    instead.
    """
    if not isinstance(data, dict):
        raise DataError(f"annotation must be a JSON object, got {type(data).__name__}")
    missing = {"image_id", "width", "height", "points"} - data.keys()
    if missing:
        raise DataError(f"annotation missing fields: {sorted(missing)}")

    image_id = data["image_id"]
    width, height = data["width"], data["height"]
    raw_points = data["points"]
    if not isinstance(image_id, str):
        raise DataError("image_id must be a string")
    if not isinstance(width, int) or not isinstance(height, int) or isinstance(width, bool) or isinstance(height, bool):
        raise DataError(f"{image_id}: width/height must be integers")
    if width < 1 or height < 1:
        raise DataError(f"{image_id}: non-positive dimensions {width}x{height}")
    if not isinstance(raw_points, list):
        raise DataError(f"{image_id}: points must be a list")

    points: list[Point] = []
    clamped = 0
    for i, item in enumerate(raw_points):
        if (
            not isinstance(item, (list, tuple))
            or len(item) != 2
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in item)
        ):
            raise DataError(f"{image_id}: points[{i}] is not an [x, y] number pair")
        x, y = float(item[0]), float(item[1])
        if math.isnan(x) or math.isnan(y):
            raise DataError(f"{image_id}: points[{i}] has NaN coordinates")
        in_bounds = 0.0 <= x < width and 0.0 <= y < height
        if not in_bounds:
            if strict:
                raise DataError(
                    f"{image_id}: points[{i}] = ({x}, {y}) outside "
                    f"[0, {width}) x [0, {height})"
                )
            nx, ny = _clamp_coord(x, float(width)), _clamp_coord(y, float(height))
            if (nx, ny) != (x, y):
                clamped += 1
            x, y = nx, ny
        points.append(Point(x, y))

    return AnnotationSet(image_id, width, height, points), clamped


def load_annotations(path: str | Path, *, strict: bool = False) -> AnnotationSet:
    """Load one annotation file.

    Clamped out-of-bounds points are reported through the module logger;
    use :func:`parse_annotations` directly when the clamp count is needed
    programmatically.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    ann, clamped = parse_annotations(data, strict=strict)
    if clamped:
        logger.warning("%s: clamped %d out-of-bounds point(s)", path, clamped)
    return ann


def save_annotations(ann: AnnotationSet, path: str | Path) -> None:
    """Write an annotation set back to the interchange format.

    Coordinates are serialized with Python's shortest round-trip float
    representation, so load -> save -> load is bitwise exact.
    """
    payload = {
        "image_id": ann.image_id,
        "width": ann.width,
        "height": ann.height,
        "points": [[p.x, p.y] for p in ann.points],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


@dataclass(frozen=True)
class ManifestEntry:
    """One image's files named by a dataset manifest."""

    annotation: Path
    image: Path | None


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Load a dataset manifest: a JSON array of {"annotation", "image"} pairs.

    Relative paths are resolved against the manifest's own directory. The
    "image" entry may be null for annotation-only pipelines.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise DataError(f"{path}: manifest must be a JSON array")
    base = path.parent
    entries: list[ManifestEntry] = []
    for i, item in enumerate(data):
        if not isinstance(item, dict) or "annotation" not in item:
            raise DataError(f"{path}: entry {i} must be an object with an 'annotation' path")
        ann_path = base / str(item["annotation"])
        img = item.get("image")
        img_path = base / str(img) if img is not None else None
        entries.append(ManifestEntry(annotation=ann_path, image=img_path))
    return entries

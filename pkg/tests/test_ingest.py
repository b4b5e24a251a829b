import json
import math

import numpy as np
import pytest

from headcount import (
    AnnotationSet,
    DataError,
    DatasetId,
    Point,
    load_annotations,
    load_manifest,
    parse_annotations,
    save_annotations,
)

from conftest import make_annotations


def ann_dict(**over):
    base = {
        "image_id": "IMG_42",
        "width": 640,
        "height": 480,
        "points": [[10.0, 20.0], [630.5, 470.25]],
    }
    base.update(over)
    return base


def test_parse_roundtrip_basic():
    ann, clamped = parse_annotations(ann_dict())
    assert clamped == 0
    assert ann.image_id == "IMG_42"
    assert (ann.width, ann.height) == (640, 480)
    assert ann.count == 2
    assert ann.points[0] == Point(10.0, 20.0)


def test_points_array_shape_and_dtype():
    ann, _ = parse_annotations(ann_dict())
    arr = ann.points_array()
    assert arr.shape == (2, 2)
    assert arr.dtype == np.float64
    assert arr[1, 0] == 630.5 and arr[1, 1] == 470.25


def test_empty_points_is_legal():
    ann, _ = parse_annotations(ann_dict(points=[]))
    assert ann.count == 0
    assert ann.points_array().shape == (0, 2)


def test_boundary_point_clamped_by_default():
    # x == width sits outside the half-open domain; lenient mode pulls it in
    ann, clamped = parse_annotations(ann_dict(points=[[640.0, 10.0]]))
    assert clamped == 1
    assert ann.points[0].x < 640.0
    assert ann.points[0].x == math.nextafter(640.0, 0.0)


def test_boundary_point_rejected_in_strict_mode():
    with pytest.raises(DataError):
        parse_annotations(ann_dict(points=[[640.0, 10.0]]), strict=True)


def test_negative_coordinate_clamped_to_zero():
    ann, clamped = parse_annotations(ann_dict(points=[[-3.5, 10.0]]))
    assert clamped == 1
    assert ann.points[0].x == 0.0


@pytest.mark.parametrize(
    "mutation",
    [
        {"width": 0},
        {"width": -5},
        {"height": 0},
        {"image_id": ""},
        {"points": [[1.0]]},
        {"points": [[1.0, 2.0, 3.0]]},
        {"points": [["a", 2.0]]},
        {"points": [[float("nan"), 2.0]]},
        {"points": [[True, 2.0]]},
        {"width": 3.5},
        {"width": True},
    ],
)
def test_malformed_payloads_rejected(mutation):
    with pytest.raises(DataError):
        parse_annotations(ann_dict(**mutation))


def test_missing_keys_rejected():
    d = ann_dict()
    del d["points"]
    with pytest.raises(DataError):
        parse_annotations(d)
    with pytest.raises(DataError):
        parse_annotations([1, 2, 3])


def test_save_load_bitwise_roundtrip(tmp_path, rng):
    # float coords must survive JSON serialization exactly
    for trial in range(20):
        ann = make_annotations(rng, image_id=f"rt_{trial}")
        path = tmp_path / f"{ann.image_id}.json"
        save_annotations(ann, path)
        back = load_annotations(path)
        assert back.image_id == ann.image_id
        assert (back.width, back.height) == (ann.width, ann.height)
        assert back.count == ann.count
        for p, q in zip(ann.points, back.points):
            assert p.x == q.x and p.y == q.y  # bitwise


def test_load_rejects_non_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(DataError):
        load_annotations(path)


def test_dataset_ids_complete():
    names = {d.name for d in DatasetId}
    assert names == {"UCF50", "SHT_A", "SHT_B", "WE", "QNRF", "GCC", "CUSTOM"}


def test_manifest_relative_paths(tmp_path):
    ann = AnnotationSet("m1", width=32, height=32, points=[Point(1.0, 1.0)])
    sub = tmp_path / "data"
    sub.mkdir()
    save_annotations(ann, sub / "m1.json")
    manifest = [{"annotation": "data/m1.json", "image": "data/m1.jpg"}]
    mpath = tmp_path / "manifest.json"
    mpath.write_text(json.dumps(manifest), encoding="utf-8")
    entries = load_manifest(mpath)
    assert len(entries) == 1
    assert entries[0].annotation == sub / "m1.json"
    assert entries[0].image == sub / "m1.jpg"
    assert load_annotations(entries[0].annotation).image_id == "m1"


def test_manifest_image_optional(tmp_path):
    mpath = tmp_path / "manifest.json"
    mpath.write_text(json.dumps([{"annotation": "a.json"}]), encoding="utf-8")
    entries = load_manifest(mpath)
    assert entries[0].image is None


def test_manifest_malformed(tmp_path):
    mpath = tmp_path / "manifest.json"
    mpath.write_text(json.dumps({"annotation": "a.json"}), encoding="utf-8")
    with pytest.raises(DataError):
        load_manifest(mpath)
    mpath.write_text(json.dumps([{"image": "a.jpg"}]), encoding="utf-8")
    with pytest.raises(DataError):
        load_manifest(mpath)

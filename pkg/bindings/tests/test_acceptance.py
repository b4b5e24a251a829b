"""Acceptance gate for the bindings package: cross-component parity."""

import json
import sys
from contextlib import contextmanager

import numpy as np
import pytest

import headcount_bindings as hb
from headcount import mae, mse, save_annotations, AnnotationSet, Point
from headcount.cli import main as cli_main
from headcount.metrics import CountPair

_CAPMAN = None


@pytest.fixture(autouse=True)
def _live_checklist(pytestconfig):
    # default fd-level capture swallows even sys.__stdout__ writes, so the
    # emitter below needs the capture manager to step around it
    global _CAPMAN
    _CAPMAN = pytestconfig.pluginmanager.getplugin("capturemanager")
    yield


def _emit(line):
    if _CAPMAN is not None:
        with _CAPMAN.global_and_fixture_disabled():
            print(line, file=sys.__stdout__, flush=True)
    else:
        print(line, file=sys.__stdout__, flush=True)


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        _emit(f"\n[FAIL] {name}")
        raise
    _emit(f"\n[PASS] {name}")


def test_binding_parity_with_cli(tmp_path):
    """50 random sets: binding-rendered bytes == CLI bytes; metrics to 1e-12."""
    rng = np.random.default_rng(99)

    with criterion("binding parity: 50 sets, py_render saved bytes == CLI bytes"):
        for i in range(50):
            # dims on the 16 grid so an identity fixed-size rule applies
            h = 16 * int(rng.integers(2, 33))
            w = 16 * int(rng.integers(2, 33))
            n = int(rng.integers(1, 120))
            xs = np.minimum(rng.uniform(0, w, n), np.nextafter(w, 0.0))
            ys = np.minimum(rng.uniform(0, h, n), np.nextafter(h, 0.0))
            pts = np.stack([xs, ys], axis=1)
            adaptive = i % 2 == 1

            case = tmp_path / f"case_{i:02d}"
            case.mkdir()
            ann = AnnotationSet(
                image_id=f"par_{i:02d}", width=w, height=h,
                points=[Point(float(x), float(y)) for x, y in pts],
            )
            save_annotations(ann, case / "a.json")
            (case / "manifest.json").write_text(
                json.dumps([{"annotation": "a.json"}]), encoding="utf-8"
            )
            kernel = (
                {"mode": "adaptive", "knn_k": 3, "beta": 0.3}
                if adaptive else
                {"mode": "fixed", "fixed_size": 15, "fixed_sigma": 4.0}
            )
            (case / "cfg.json").write_text(json.dumps({
                "dataset": "CUSTOM",
                "kernel": kernel,
                "resize": {"kind": "fixed_size", "fixed": [h, w]},
            }), encoding="utf-8")

            rc = cli_main([
                "gengt", "--manifest", str(case / "manifest.json"),
                "--out", str(case / "out"), "--config", str(case / "cfg.json"),
            ])
            assert rc == 0
            cli_bytes = (case / "out" / f"par_{i:02d}.c3dm").read_bytes()

            mode = "adaptive" if adaptive else "fixed"
            bound = hb.py_render(pts, h, w, mode=mode)
            hb.save_c3dm(bound, case / "bound.c3dm")
            assert (case / "bound.c3dm").read_bytes() == cli_bytes, f"case {i}"

    with criterion("binding parity: py_mae_mse == primary mae/mse to 1e-12, 50 pair sets"):
        for _ in range(50):
            k = int(rng.integers(1, 40))
            pred = rng.uniform(0, 2000, k)
            act = rng.uniform(0, 2000, k)
            got_mae, got_mse = hb.py_mae_mse(pred, act)
            pairs = [CountPair(str(j), float(p), float(a))
                     for j, (p, a) in enumerate(zip(pred, act))]
            assert abs(got_mae - mae(pairs)) <= 1e-12
            assert abs(got_mse - mse(pairs)) <= 1e-12

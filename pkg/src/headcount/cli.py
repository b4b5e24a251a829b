"""Command-line pipeline driver.

Commands:

    headcount gengt      render ground-truth density maps from a manifest
    headcount preprocess resize images + annotations per the dataset rule
    headcount eval       score predicted maps against ground truth
    headcount inspect    dump a C3DM file (optionally export a PNG heat map)
    headcount log        list recorded runs from an experiment store

Exit codes: 0 success, 1 usage, 2 data error, 3 I/O. Human-readable
tables go to stdout; errors are emitted as JSON lines on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import labels
from .c3dm import load_c3dm, save_c3dm
from .density import KernelSpec, render
from .errors import DataError, HeadcountError, StoreError
from .expdb import open_store
from .ingest import (
    AnnotationSet,
    DatasetId,
    ManifestEntry,
    load_manifest,
    parse_annotations,
    save_annotations,
)
from .labels import DownsampleSpec, NormalizationSpec
from .metrics import evaluate_run
from .preprocess import ResizeRule, apply_resize, plan_resize
from .rules import rule_for

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3


def _emit_error(kind: str, message: str, **extra: Any) -> None:
    payload = {"error": kind, "message": message}
    payload.update(extra)
    print(json.dumps(payload), file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        raise SystemExit(EXIT_USAGE)


@dataclass
class PipelineConfig:
    """Resolved parameters for gengt/preprocess runs."""

    dataset: DatasetId
    kernel: KernelSpec
    resize: ResizeRule
    manifest: Path
    output_dir: Path
    downsample: int | None = None
    normalize: float | None = None
    seed: int | None = None
    threads: int = 1
    strict: bool = False
    store: Path | None = None

    def snapshot(self) -> dict[str, Any]:
        """Every output-affecting parameter, with defaults made explicit.

        Thread count is deliberately absent: results are byte-identical
        for any pool size, so it is an execution detail, not part of the
        experiment's identity (two runs differing only in threads must
        hash to the same config).
        """
        return {
            "dataset": self.dataset.value,
            "kernel": self.kernel.to_dict(),
            "resize": self.resize.to_dict(),
            "downsample": self.downsample,
            "normalize": self.normalize,
            "seed": self.seed,
            "strict": self.strict,
        }


def _load_config_file(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return data


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Merge defaults <- config file <- command-line flags."""
    cfg = _load_config_file(getattr(args, "config", None))

    dataset_name = getattr(args, "dataset", None) or cfg.get("dataset")
    if dataset_name is None:
        raise DataError("no dataset given (flag --dataset or config key 'dataset')")
    try:
        dataset = DatasetId(dataset_name)
    except ValueError:
        raise DataError(f"unknown dataset {dataset_name!r}") from None

    kernel_over = cfg.get("kernel")
    resize_over = cfg.get("resize")
    if dataset is DatasetId.CUSTOM:
        if kernel_over is None or resize_over is None:
            raise DataError("CUSTOM dataset requires 'kernel' and 'resize' in the config")
        kernel = KernelSpec.from_dict(kernel_over)
        resize = ResizeRule.from_dict(resize_over)
    else:
        resize, kernel = rule_for(dataset)
        if kernel_over is not None:
            kernel = KernelSpec.from_dict({**kernel.to_dict(), **kernel_over})
        if resize_over is not None:
            resize = ResizeRule.from_dict({**resize.to_dict(), **resize_over})

    manifest = getattr(args, "manifest", None) or cfg.get("manifest")
    output_dir = getattr(args, "out", None) or cfg.get("output_dir")
    if manifest is None or output_dir is None:
        raise DataError("both a manifest and an output directory are required")

    downsample = getattr(args, "downsample", None)
    if downsample is None:
        downsample = cfg.get("downsample")
    normalize = getattr(args, "normalize", None)
    if normalize is None:
        normalize = cfg.get("normalize")
    seed = args.seed if args.seed is not None else cfg.get("seed")
    threads = args.threads if args.threads is not None else cfg.get("threads", 1)
    store = getattr(args, "store", None) or cfg.get("store")

    return PipelineConfig(
        dataset=dataset,
        kernel=kernel,
        resize=resize,
        manifest=Path(manifest),
        output_dir=Path(output_dir),
        downsample=downsample,
        normalize=normalize,
        seed=seed,
        threads=int(threads),
        strict=bool(getattr(args, "strict", False) or cfg.get("strict", False)),
        store=Path(store) if store else None,
    )


def _load_entry_annotations(entry: ManifestEntry, strict: bool) -> tuple[AnnotationSet, int]:
    try:
        data = json.loads(entry.annotation.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{entry.annotation}: not valid JSON: {exc}") from exc
    return parse_annotations(data, strict=strict)


def _gengt_one(entry: ManifestEntry, cfg: PipelineConfig) -> dict[str, Any]:
    ann, clamped = _load_entry_annotations(entry, cfg.strict)
    plan = plan_resize((ann.height, ann.width), cfg.resize)
    ann = apply_resize(ann, plan)
    dmap = render(ann, cfg.kernel)
    head_count = labels.count(dmap)

    flags: list[str] = []
    if clamped:
        flags.append(f"clamped:{clamped}")
    if cfg.downsample is not None and cfg.downsample != 1:
        dmap = labels.downsample_sum_preserving(dmap, DownsampleSpec(cfg.downsample))
        flags.append(f"downsampled:{cfg.downsample}")
    if cfg.normalize is not None:
        dmap = labels.normalize_labels(dmap, NormalizationSpec(cfg.normalize))
        flags.append(f"normalized:{cfg.normalize}")

    out_path = cfg.output_dir / f"{ann.image_id}.c3dm"
    save_c3dm(dmap, out_path)
    return {
        "image_id": ann.image_id,
        "file": out_path.name,
        "points": ann.count,
        "count": head_count,
        "dims": [dmap.height, dmap.width],
        "flags": flags,
    }


def _run_pool(entries, worker, threads: int) -> tuple[list[Any], list[tuple[int, Exception]]]:
    """Run worker over entries, preserving input order; collect failures."""
    results: list[Any] = [None] * len(entries)
    failures: list[tuple[int, Exception]] = []

    def call(i: int):
        return i, worker(entries[i])

    if threads <= 1:
        it = map(call, range(len(entries)))
        for i in range(len(entries)):
            try:
                idx, res = next(it)
                results[idx] = res
            except StopIteration:
                break
            except Exception as exc:  # noqa: BLE001 - reported per image
                failures.append((i, exc))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(call, i) for i in range(len(entries))]
            for i, fut in enumerate(futures):
                try:
                    idx, res = fut.result()
                    results[idx] = res
                except Exception as exc:  # noqa: BLE001
                    failures.append((i, exc))
    return results, failures


def _classify(exc: Exception) -> int:
    if isinstance(exc, (FileNotFoundError, PermissionError, OSError)) and not isinstance(
        exc, HeadcountError
    ):
        return EXIT_IO
    if isinstance(exc, StoreError):
        return EXIT_IO
    return EXIT_DATA


def _report_failures(entries, failures) -> int:
    worst = EXIT_OK
    for idx, exc in failures:
        name = str(entries[idx].annotation) if idx < len(entries) else "?"
        _emit_error(type(exc).__name__, str(exc), source=name)
        worst = max(worst, _classify(exc))
    return worst


def cmd_gengt(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    entries = load_manifest(cfg.manifest)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    if not entries:
        print("manifest is empty; nothing to do")
        return EXIT_OK

    ids = [e.annotation for e in entries]
    if len(set(ids)) != len(ids):
        raise DataError("manifest lists the same annotation file more than once")

    results, failures = _run_pool(entries, lambda e: _gengt_one(e, cfg), cfg.threads)
    if failures:
        return _report_failures(entries, failures)

    seen: set[str] = set()
    for r in results:
        if r["image_id"] in seen:
            raise DataError(f"duplicate image_id {r['image_id']!r} in manifest")
        seen.add(r["image_id"])

    summary = {"config": cfg.snapshot(), "images": results}
    (cfg.output_dir / "manifest.out.json").write_text(
        json.dumps(summary, indent=2), encoding="utf-8"
    )

    store_dir = cfg.store if cfg.store is not None else cfg.output_dir / "expdb"
    with open_store(store_dir) as store:
        record = store.begin_run(
            cfg.dataset, cfg.snapshot(), notes=f"gengt: {len(results)} map(s)"
        )
    print(f"rendered {len(results)} density map(s) -> {cfg.output_dir}")
    print(f"run {record.run_id} recorded in {store_dir}")
    return EXIT_OK


def _preprocess_one(entry: ManifestEntry, cfg: PipelineConfig) -> dict[str, Any]:
    from PIL import Image

    ann, clamped = _load_entry_annotations(entry, cfg.strict)
    if entry.image is None:
        raise DataError(f"{ann.image_id}: manifest entry has no image path")
    try:
        img = Image.open(entry.image)
        img.load()
    except FileNotFoundError:
        raise
    except Exception as exc:  # Pillow raises assorted types for corrupt files
        raise DataError(f"{entry.image}: cannot decode image: {exc}") from exc
    if img.size != (ann.width, ann.height):
        raise DataError(
            f"{ann.image_id}: image is {img.size[0]}x{img.size[1]} but "
            f"annotations say {ann.width}x{ann.height}"
        )

    plan = plan_resize((ann.height, ann.width), cfg.resize)
    dh, dw = plan.dst
    if (dw, dh) != img.size:
        img = img.resize((dw, dh), Image.Resampling.BILINEAR)
    out_img = cfg.output_dir / entry.image.name
    img.save(out_img)

    ann = apply_resize(ann, plan)
    out_ann = cfg.output_dir / entry.annotation.name
    save_annotations(ann, out_ann)
    flags = [f"clamped:{clamped}"] if clamped else []
    return {
        "image_id": ann.image_id,
        "image": out_img.name,
        "annotation": out_ann.name,
        "dims": [dh, dw],
        "flags": flags,
    }


def cmd_preprocess(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    entries = load_manifest(cfg.manifest)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if not entries:
        print("manifest is empty; nothing to do")
        return EXIT_OK

    results, failures = _run_pool(entries, lambda e: _preprocess_one(e, cfg), cfg.threads)
    if failures:
        return _report_failures(entries, failures)

    summary = {"config": cfg.snapshot(), "images": results}
    (cfg.output_dir / "manifest.out.json").write_text(
        json.dumps(summary, indent=2), encoding="utf-8"
    )
    print(f"preprocessed {len(results)} image(s) -> {cfg.output_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    out_dir = Path(args.out) if args.out else None
    csv_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "per_image.csv"
    report = evaluate_run(
        args.pred_dir, args.gt_dir, with_quality=args.quality, per_image_csv=csv_path
    )
    print(report.to_table())
    if out_dir is not None:
        (out_dir / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8"
        )
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    dmap = load_c3dm(args.file)
    v = dmap.values
    print(f"file        {args.file}")
    print(f"height      {dmap.height}")
    print(f"width       {dmap.width}")
    print(f"norm_factor {dmap.norm_factor!r}")
    print(f"sum         {float(v.sum())!r}")
    print(f"count       {labels.count(dmap)!r}")
    print(f"min         {float(v.min())!r}")
    print(f"max         {float(v.max())!r}")
    if args.png:
        from PIL import Image

        peak = float(v.max())
        scaled = v / peak if peak > 0 else v
        img = Image.fromarray((scaled * 255.0).astype(np.uint8), mode="L")
        img.save(args.png)
        print(f"heat map    {args.png}")
    return EXIT_OK


def cmd_log(args: argparse.Namespace) -> int:
    store = open_store(args.store_dir, read_only=True)
    dataset = DatasetId(args.dataset) if args.dataset else None
    rows = store.query(dataset=dataset, run_id=args.run, since=args.since)
    if not rows:
        print("no runs recorded")
        return EXIT_OK
    if args.best:
        header = f"{'run_id':<26}  {'dataset':<7}  {'best_epoch':>10}  {'best_mae':>10}  {'best_mse':>10}"
        print(header)
        for s in rows:
            if s.best is None:
                print(f"{s.run.run_id:<26}  {s.run.dataset.value:<7}  {'-':>10}  {'-':>10}  {'-':>10}")
            else:
                print(
                    f"{s.run.run_id:<26}  {s.run.dataset.value:<7}  "
                    f"{s.best.best_epoch:>10d}  {s.best.best_mae:>10.4f}  "
                    f"{s.best.best_mse_at_best_mae:>10.4f}"
                )
    else:
        print(f"{'run_id':<26}  {'created_at':<32}  {'dataset':<7}  {'config':<12}  notes")
        for s in rows:
            print(
                f"{s.run.run_id:<26}  {s.run.created_at:<32}  "
                f"{s.run.dataset.value:<7}  {s.run.config_hash[:12]:<12}  {s.run.notes}"
            )
    return EXIT_OK


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file (PipelineConfig fields)")
    sub.add_argument("--seed", type=int, default=None, help="RNG seed (u64)")
    sub.add_argument("--threads", type=int, default=None, help="worker pool size")
    sub.add_argument("--store", help="experiment store directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="headcount", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gengt", help="render ground-truth density maps")
    p.add_argument("--manifest", help="dataset manifest JSON")
    p.add_argument("--out", help="output directory for .c3dm files")
    p.add_argument("--dataset", help="dataset id (UCF50, SHT_A, SHT_B, WE, QNRF, GCC, CUSTOM)")
    p.add_argument("--downsample", type=int, default=None, help="sum-preserving downsample factor")
    p.add_argument("--normalize", type=float, default=None, help="label normalization factor")
    p.add_argument("--strict", action="store_true", help="reject out-of-bounds points")
    _add_common(p)
    p.set_defaults(func=cmd_gengt)

    p = subs.add_parser("preprocess", help="resize images and annotations")
    p.add_argument("--manifest", help="dataset manifest JSON")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dataset", help="dataset id")
    p.add_argument("--strict", action="store_true", help="reject out-of-bounds points")
    _add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = subs.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("pred_dir", help="directory of predicted .c3dm maps")
    p.add_argument("gt_dir", help="directory of ground-truth .c3dm maps")
    p.add_argument("--quality", action="store_true", help="also compute PSNR/SSIM")
    p.add_argument("--out", help="directory for report.json and per_image.csv")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("inspect", help="print a C3DM file's stats")
    p.add_argument("file", help=".c3dm file")
    p.add_argument("--png", help="export a peak-normalized PNG heat map")
    _add_common(p)
    p.set_defaults(func=cmd_inspect)

    p = subs.add_parser("log", help="list recorded experiment runs")
    p.add_argument("store_dir", help="experiment store directory")
    p.add_argument("--dataset", help="filter by dataset id")
    p.add_argument("--run", help="filter by run id")
    p.add_argument("--since", help="filter by RFC 3339 timestamp")
    p.add_argument("--best", action="store_true", help="show per-run best trackers")
    _add_common(p)
    p.set_defaults(func=cmd_log)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_DATA
    except StoreError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_IO
    except HeadcountError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_DATA
    except OSError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""Crowd-counting data toolkit.

Turns head-point annotations into density-map ground truth, applies
per-dataset resize rules, evaluates predicted maps, and keeps an
append-only log of experiment runs.
"""

from .c3dm import dumps_c3dm, load_c3dm, loads_c3dm, save_c3dm
from .density import DensityMap, KernelMode, KernelSpec, gaussian_kernel, knn_mean_distance, render
from .errors import DataError, FormatError, HeadcountError, StoreError, StoreLockedError
from .expdb import (
    BestTracker,
    EpochEntry,
    RunRecord,
    RunStore,
    RunSummary,
    canonical_config,
    config_hash,
    new_ulid,
    open_store,
    replay_best_tracker,
)
from .ingest import (
    AnnotationSet,
    DatasetId,
    ManifestEntry,
    Point,
    load_annotations,
    load_manifest,
    parse_annotations,
    save_annotations,
)
from .labels import (
    DownsampleSpec,
    NormalizationSpec,
    count,
    denormalize_labels,
    downsample_sum_preserving,
    normalize_labels,
)
from .metrics import CountPair, EvalReport, evaluate_run, mae, mse, psnr, ssim
from .preprocess import (
    BatchPlan,
    BatchStrategy,
    ResizeKind,
    ResizePlan,
    ResizeRule,
    apply_resize,
    crop_annotations,
    plan_batch,
    plan_resize,
)
from .rules import DATASET_RULES, rule_for

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet",
    "BatchPlan",
    "BatchStrategy",
    "BestTracker",
    "CountPair",
    "DATASET_RULES",
    "DataError",
    "DatasetId",
    "DensityMap",
    "DownsampleSpec",
    "EpochEntry",
    "EvalReport",
    "FormatError",
    "HeadcountError",
    "KernelMode",
    "KernelSpec",
    "ManifestEntry",
    "NormalizationSpec",
    "Point",
    "ResizeKind",
    "ResizePlan",
    "ResizeRule",
    "RunRecord",
    "RunStore",
    "RunSummary",
    "StoreError",
    "StoreLockedError",
    "apply_resize",
    "canonical_config",
    "config_hash",
    "count",
    "crop_annotations",
    "denormalize_labels",
    "downsample_sum_preserving",
    "dumps_c3dm",
    "evaluate_run",
    "gaussian_kernel",
    "knn_mean_distance",
    "load_annotations",
    "load_c3dm",
    "load_manifest",
    "loads_c3dm",
    "mae",
    "mse",
    "new_ulid",
    "normalize_labels",
    "open_store",
    "parse_annotations",
    "plan_batch",
    "plan_resize",
    "psnr",
    "render",
    "replay_best_tracker",
    "rule_for",
    "save_annotations",
    "save_c3dm",
    "ssim",
    "__version__",
]

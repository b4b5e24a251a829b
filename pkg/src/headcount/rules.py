"""The per-dataset sizing and kernel registry.

Each supported dataset maps to exactly one resize rule and one kernel
default. The three ratio-preserving datasets share max side 1024 with
both dimensions held to multiples of 16; the fixed-size rows pin exact
target resolutions.
"""

from __future__ import annotations

from .density import KernelSpec
from .errors import DataError
from .ingest import DatasetId
from .preprocess import ResizeRule

__all__ = ["rule_for", "DATASET_RULES"]

_RATIO_1024 = ResizeRule.ratio_preserving(max_side=1024)
_FIXED_KERNEL = KernelSpec.fixed(15, 4.0)

DATASET_RULES: dict[DatasetId, tuple[ResizeRule, KernelSpec]] = {
    DatasetId.UCF50: (_RATIO_1024, _FIXED_KERNEL),
    DatasetId.SHT_A: (_RATIO_1024, KernelSpec.adaptive(k=3, beta=0.3)),
    DatasetId.SHT_B: (ResizeRule.fixed_size(768, 1024), _FIXED_KERNEL),
    DatasetId.WE: (ResizeRule.fixed_size(576, 720), _FIXED_KERNEL),
    DatasetId.QNRF: (_RATIO_1024, _FIXED_KERNEL),
    DatasetId.GCC: (ResizeRule.fixed_size(544, 960), _FIXED_KERNEL),
}


def rule_for(dataset: DatasetId) -> tuple[ResizeRule, KernelSpec]:
    """The registered (resize rule, kernel spec) for a dataset.

    CUSTOM has no registered defaults: callers must supply explicit rules.
    """
    if dataset is DatasetId.CUSTOM:
        raise DataError(
            "CUSTOM dataset has no registered rules; supply an explicit "
            "resize rule and kernel spec"
        )
    try:
        return DATASET_RULES[dataset]
    except KeyError:
        raise DataError(f"unknown dataset {dataset!r}") from None

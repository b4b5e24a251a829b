import numpy as np
import pytest

from headcount import (
    DataError,
    DensityMap,
    DownsampleSpec,
    KernelSpec,
    NormalizationSpec,
    count,
    denormalize_labels,
    downsample_sum_preserving,
    normalize_labels,
    render,
)

from conftest import make_annotations


def block_sum_oracle(values, f):
    """Naive double-loop block reduction."""
    h, w = values.shape
    out = np.zeros((h // f, w // f))
    for i in range(h // f):
        for j in range(w // f):
            out[i, j] = values[i * f : (i + 1) * f, j * f : (j + 1) * f].sum()
    return out


def test_downsample_matches_block_oracle(rng):
    for _ in range(10):
        f = int(rng.choice([2, 4, 8]))
        h = f * int(rng.integers(1, 30))
        w = f * int(rng.integers(1, 30))
        vals = rng.uniform(0, 1, size=(h, w))
        d = downsample_sum_preserving(DensityMap(vals), DownsampleSpec(f))
        assert d.values.shape == (h // f, w // f)
        # summation order differs from the loop's, so ULP-level tolerance
        assert np.allclose(d.values, block_sum_oracle(vals, f), rtol=1e-14, atol=0)


def test_downsample_constant_block_worked_example():
    # an 8x8 patch of 0.01 collapses to the single value 0.64, exactly
    d = downsample_sum_preserving(DensityMap(np.full((8, 8), 0.01)), DownsampleSpec(8))
    assert d.values.shape == (1, 1)
    assert d.values[0, 0] == 0.64


def test_downsample_preserves_count(rng):
    for _ in range(10):
        ann = make_annotations(rng, width=16 * int(rng.integers(2, 20)),
                               height=16 * int(rng.integers(2, 20)))
        d = render(ann, KernelSpec.fixed())
        down = downsample_sum_preserving(d, DownsampleSpec(8))
        if ann.count:
            assert abs(count(down) - count(d)) <= 1e-5 * ann.count
        else:
            assert count(down) == 0.0


def test_downsample_factor_one_is_identity():
    vals = np.arange(12.0).reshape(3, 4)
    d = downsample_sum_preserving(DensityMap(vals), DownsampleSpec(1))
    assert (d.values == vals).all()


def test_downsample_rejects_nondivisible_dims():
    with pytest.raises(DataError):
        downsample_sum_preserving(DensityMap(np.zeros((10, 16))), DownsampleSpec(8))


def test_downsample_rejects_bad_factor():
    with pytest.raises(DataError):
        DownsampleSpec(0)


def test_downsample_carries_norm_factor():
    d = DensityMap(np.full((8, 8), 1.0), norm_factor=100.0)
    out = downsample_sum_preserving(d, DownsampleSpec(8))
    assert out.norm_factor == 100.0


def test_normalize_scales_values_and_factor():
    d = DensityMap(np.full((4, 4), 0.02))
    n = normalize_labels(d, NormalizationSpec(100.0))
    assert (n.values == 2.0).all()
    assert n.norm_factor == 100.0
    assert d.values[0, 0] == 0.02  # input untouched


def test_normalize_count_invariant(rng):
    for _ in range(10):
        ann = make_annotations(rng, width=64, height=64)
        d = render(ann, KernelSpec.fixed())
        n = normalize_labels(d, NormalizationSpec(100.0))
        if ann.count:
            assert abs(count(n) - count(d)) <= 1e-9 * ann.count
        else:
            assert count(n) == count(d) == 0.0


def test_normalize_twice_rejected():
    d = normalize_labels(DensityMap(np.ones((2, 2))), NormalizationSpec(100.0))
    with pytest.raises(DataError):
        normalize_labels(d, NormalizationSpec(100.0))


def test_denormalize_roundtrip_per_cell(rng):
    vals = rng.uniform(0, 0.1, size=(32, 32))
    d = DensityMap(vals)
    back = denormalize_labels(normalize_labels(d, NormalizationSpec(100.0)))
    assert back.norm_factor == 1.0
    nz = vals > 0
    assert (np.abs(back.values[nz] - vals[nz]) <= 1e-9 * vals[nz]).all()


def test_denormalize_identity_when_raw():
    d = DensityMap(np.ones((2, 2)))
    out = denormalize_labels(d)
    assert (out.values == d.values).all() and out.norm_factor == 1.0


def test_normalization_spec_validation():
    with pytest.raises(DataError):
        NormalizationSpec(0.0)
    with pytest.raises(DataError):
        NormalizationSpec(-2.0)


def test_count_divides_out_norm():
    d = DensityMap(np.full((10, 10), 3.0), norm_factor=100.0)
    assert count(d) == 300.0 / 100.0


def test_count_compensated_sum_tiny_values():
    # 1e6 cells of 1e-6 must sum to exactly-ish 1; naive f32 would drift
    d = DensityMap(np.full((1000, 1000), 1e-6))
    assert abs(count(d) - 1.0) < 1e-12

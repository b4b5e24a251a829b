import numpy as np
import pytest

from headcount import AnnotationSet, Point


def make_annotations(rng, *, width=None, height=None, n_points=None, image_id="img"):
    """Random but well-formed annotation set for property tests."""
    if width is None:
        width = int(rng.integers(16, 1025))
    if height is None:
        height = int(rng.integers(16, 1025))
    if n_points is None:
        n_points = int(rng.integers(0, 101))
    xs = rng.uniform(0.0, width, size=n_points)
    ys = rng.uniform(0.0, height, size=n_points)
    # uniform() can return the high end; keep the half-open invariant
    xs = np.minimum(xs, np.nextafter(width, 0.0))
    ys = np.minimum(ys, np.nextafter(height, 0.0))
    points = [Point(float(x), float(y)) for x, y in zip(xs, ys)]
    return AnnotationSet(image_id=image_id, width=width, height=height, points=points)


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occmask.geometry import SENTINEL_COORD, Intrinsics, RigidTransform, SampleGrid, pixel_grid
from occmask.warp import (
    bilinear_sample,
    depth_to_disparity,
    downsample_area,
    in_bounds_mask,
    nearest_sample,
    reconstruct,
    resize_bilinear,
)


def grid_from(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return SampleGrid(u, v, np.ones_like(u))


def test_identity_sampling_is_bit_identical():
    rng = np.random.default_rng(0)
    img = rng.random((5, 7, 3))
    u, v = pixel_grid(5, 7)
    np.testing.assert_array_equal(bilinear_sample(img, grid_from(u, v)), img)
    np.testing.assert_array_equal(bilinear_sample(img[..., 0], grid_from(u, v)), img[..., 0])


def test_midpoint_interpolation():
    src = np.array([[0.0, 1.0]])
    assert bilinear_sample(src, grid_from([[0.5]], [[0.0]]))[0, 0] == 0.5


def test_border_clamping():
    rng = np.random.default_rng(1)
    src = rng.random((4, 6))
    out = bilinear_sample(src, grid_from([[-5.0, 100.0]], [[2.0, 2.0]]))
    assert out[0, 0] == src[2, 0]
    assert out[0, 1] == src[2, 5]
    out = bilinear_sample(src, grid_from([[SENTINEL_COORD]], [[SENTINEL_COORD]]))
    assert out[0, 0] == src[0, 0]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sampling_is_convex_combination(seed):
    rng = np.random.default_rng(seed)
    src = rng.uniform(-3, 3, (6, 9))
    u = rng.uniform(-4, 13, (10, 10))
    v = rng.uniform(-4, 10, (10, 10))
    out = bilinear_sample(src, grid_from(u, v))
    assert out.min() >= src.min() - 1e-12
    assert out.max() <= src.max() + 1e-12


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eps=st.floats(1e-6, 1e-2))
def test_sampling_is_continuous(seed, eps):
    rng = np.random.default_rng(seed)
    src = rng.random((6, 9))
    u = rng.uniform(-1, 9, 50)
    v = rng.uniform(-1, 6, 50)
    a = bilinear_sample(src, grid_from(u, v))
    b = bilinear_sample(src, grid_from(u + eps, v + eps))
    value_range = src.max() - src.min()
    assert np.all(np.abs(a - b) <= eps * value_range * 2 + 1e-12)


def test_nearest_sample_rounds_half_up():
    src = np.arange(4.0).reshape(1, 4)
    out = nearest_sample(src, grid_from([[0.49, 0.5, 2.6, 10.0]], [[0.0] * 4]))
    np.testing.assert_array_equal(out, [[0.0, 1.0, 3.0, 3.0]])


def test_in_bounds_mask_cases():
    u, v = pixel_grid(4, 5)
    np.testing.assert_array_equal(in_bounds_mask(grid_from(u, v), 5, 4), 1)
    sentinel = SampleGrid(np.full((1, 1), SENTINEL_COORD), np.full((1, 1), SENTINEL_COORD), -np.ones((1, 1)))
    assert in_bounds_mask(sentinel, 5, 4)[0, 0] == 0


def test_in_bounds_lateral_shift_masks_left_columns():
    u, v = pixel_grid(3, 100)
    # content shifted right by 10 px samples the source at u - 10
    mask = in_bounds_mask(grid_from(u + 10.0, v), 100, 3)
    mask_left = in_bounds_mask(grid_from(u - 10.0, v), 100, 3)
    np.testing.assert_array_equal(mask_left[:, :10], 0)
    np.testing.assert_array_equal(mask_left[:, 10:], 1)
    np.testing.assert_array_equal(mask[:, 90:], 0)
    np.testing.assert_array_equal(mask[:, :90], 1)


def test_reconstruct_identity_is_exact():
    rng = np.random.default_rng(2)
    img = rng.random((6, 8, 3))
    k = Intrinsics(10.0, 10.0, 4.0, 3.0)
    rec, grid = reconstruct(img, rng.uniform(1, 5, (6, 8)), k, RigidTransform.identity())
    np.testing.assert_array_equal(rec, img)
    assert grid.shape == (6, 8)


def test_reconstruct_lateral_plane_shift():
    # vertical stripes make the horizontal shift directly visible
    h, w = 4, 60
    k = Intrinsics(50.0, 50.0, 30.0, 2.0)
    d, b = 10.0, 1.0
    shift = k.fx * b / d  # 5 px
    cols = np.arange(w, dtype=np.float64)
    src = np.tile(0.5 + 0.4 * np.sin(cols / 3.0), (h, 1))
    rec, grid = reconstruct(src, np.full((h, w), d), k, RigidTransform(np.eye(3), (-b, 0.0, 0.0)))
    valid = in_bounds_mask(grid, w, h).astype(bool)
    expected = np.tile(0.5 + 0.4 * np.sin((cols - shift) / 3.0), (h, 1))
    # linear interpolation of a sinusoid with period 6*pi px; error bound h^2/8 * max|f''|
    assert np.max(np.abs(rec - expected)[valid]) < 0.4 / 9 / 8 + 1e-12
    assert np.all(valid[:, int(np.ceil(shift)) :]) and not np.any(valid[:, : int(shift)])


def test_resize_and_downsample():
    rng = np.random.default_rng(3)
    a = rng.random((8, 12))
    np.testing.assert_array_equal(resize_bilinear(a, 8, 12), a)
    small = downsample_area(a, 2)
    assert small.shape == (4, 6)
    assert small[0, 0] == pytest.approx(a[:2, :2].mean())
    const = np.full((3, 5), 2.5)
    np.testing.assert_allclose(resize_bilinear(const, 12, 20), 2.5)


def test_depth_to_disparity_exact():
    d = np.array([[2.0, 4.0], [0.5, 8.0]])
    np.testing.assert_array_equal(depth_to_disparity(d), 1.0 / d)

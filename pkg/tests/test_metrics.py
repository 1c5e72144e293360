import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occmask.errors import InvalidInputError
from occmask.metrics import (
    DepthMetrics,
    depth_metrics,
    evaluate_pairs,
    format_table,
    mean_metrics,
    median_scaling,
    metrics_from_dict,
)

# depths whose products with 1.25 and its powers are exact in binary floating point
GT = np.array([[4.0, 8.0], [16.0, 32.0]])


def test_identity_prediction():
    m = depth_metrics(GT, GT)
    assert m.as_tuple() == (0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0)


def test_scaled_prediction_strict_threshold():
    m = depth_metrics(1.25 * GT, GT)
    assert (m.a1, m.a2, m.a3) == (0.0, 1.0, 1.0)
    assert m.abs_rel == 0.25


def test_two_pixel_fixture():
    m = depth_metrics(np.array([2.0, 4.0]), np.array([1.0, 4.0]))
    assert m.abs_rel == 0.5
    assert m.sq_rel == 0.5
    assert m.rmse == math.sqrt(0.5)
    assert m.rmse_log == pytest.approx(math.log(2) / math.sqrt(2), rel=1e-15)
    assert (m.a1, m.a2, m.a3) == (0.5, 0.5, 0.5)


@pytest.mark.parametrize("i", [1, 2, 3])
def test_thresholds_flip_at_powers(i):
    c = 1.25**i
    at = depth_metrics(c * GT, GT)
    below = depth_metrics(c * (1 - 1e-9) * GT, GT)
    accs = lambda m: (m.a1, m.a2, m.a3)
    assert accs(at)[i - 1] == 0.0
    assert accs(below)[i - 1] == 1.0
    # dividing instead of multiplying gives the same delta
    assert accs(depth_metrics(GT / c, GT))[i - 1] == 0.0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_permutation_invariance_and_ordering(seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(1, 90, 50)
    pred = gt * np.exp(rng.normal(0, 0.4, 50))
    perm = rng.permutation(50)
    a = depth_metrics(pred, gt)
    b = depth_metrics(pred[perm], gt[perm])
    np.testing.assert_allclose(a.as_tuple(), b.as_tuple(), rtol=1e-12, atol=1e-15)
    assert a.a1 <= a.a2 <= a.a3
    assert min(a.abs_rel, a.sq_rel, a.rmse, a.rmse_log) >= 0


def test_cap_and_valid_mask():
    gt = np.array([10.0, 100.0, 0.0])
    pred = np.array([10.0, 1.0, 5.0])
    assert depth_metrics(pred, gt).abs_rel == 0.0  # gt > 80 and gt == 0 are excluded
    assert depth_metrics(pred, gt, cap=200.0).abs_rel == pytest.approx(0.99 / 2)
    valid = np.array([False, True, False])
    with pytest.raises(InvalidInputError):
        depth_metrics(pred, gt, valid)  # only pixel is above the cap
    with pytest.raises(InvalidInputError):
        depth_metrics(np.array([0.0]), np.array([1.0]))


def test_prediction_floor():
    m = depth_metrics(np.array([1e-5]), np.array([1.0]))
    assert m.abs_rel == pytest.approx(1 - 1e-3)


def test_median_scaling():
    assert median_scaling(GT, GT) == 1.0
    assert median_scaling(GT / 2, GT) == 2.0
    with pytest.raises(InvalidInputError):
        median_scaling(np.zeros(4), np.ones(4))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.05, 20))
def test_median_alignment_removes_global_scale(seed, scale):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(1, 80, 101)
    pred = gt * np.exp(rng.normal(0, 0.1, 101))
    aligned = depth_metrics(median_scaling(pred / scale, gt) * pred / scale, gt)
    reference = depth_metrics(median_scaling(pred, gt) * pred, gt)
    np.testing.assert_allclose(aligned.as_tuple(), reference.as_tuple(), rtol=1e-9, atol=1e-12)
    if scale >= 1.5 or scale <= 1 / 1.5:
        # a clearly mis-scaled prediction is improved by alignment
        assert aligned.abs_rel < depth_metrics(pred / scale, gt).abs_rel


def test_evaluate_pairs_averages_per_image():
    a = (np.array([2.0, 4.0]), np.array([1.0, 4.0]))
    b = (np.array([3.0]), np.array([3.0]))
    m = evaluate_pairs([a, b])
    assert m.abs_rel == 0.25
    assert m == mean_metrics([depth_metrics(*a), depth_metrics(*b)])
    assert evaluate_pairs([(GT / 3, GT)], median_scale=True).abs_rel == pytest.approx(0.0, abs=1e-15)


def test_table_and_dict():
    m = depth_metrics(GT, GT)
    table = format_table(m)
    head, row = table.splitlines()
    assert head.split() == ["Abs", "Rel", "Sq", "Rel", "RMSE", "RMSE", "log", "d<1.25", "d<1.25^2", "d<1.25^3"]
    assert row.split() == ["0.000"] * 4 + ["1.000"] * 3
    assert metrics_from_dict(m.to_dict()) == m
    assert isinstance(m, DepthMetrics)

"""CAM computation, normalization and pseudo-mask contracts."""

import numpy as np
import pytest

from wsseg.cam import compute_cams, normalize_cams, pseudo_mask


def test_one_hot_weight_selects_feature_row(rng):
    z = np.abs(rng.standard_normal((4, 9)))
    w = np.zeros((2, 4))
    w[0, 2] = 1.0
    w[1, 0] = 1.0
    cams = compute_cams(z, w)
    np.testing.assert_allclose(cams[0], z[2])
    np.testing.assert_allclose(cams[1], z[0])


def test_negative_weights_relu_to_zero(rng):
    z = np.abs(rng.standard_normal((3, 7)))
    w = -np.abs(rng.standard_normal((2, 3)))
    assert np.all(compute_cams(z, w) == 0.0)


def test_matrix_product_oracle():
    w = np.array([[1.0, -1.0]])
    z = np.array([[2.0, 0.0], [1.0, 3.0]])
    np.testing.assert_array_equal(compute_cams(z, w), [[1.0, 0.0]])


def test_compute_cams_shape_mismatch(rng):
    with pytest.raises(ValueError):
        compute_cams(rng.standard_normal((4, 5)), rng.standard_normal((2, 3)))


def test_compute_cams_nonnegative(rng):
    for _ in range(20):
        z = rng.standard_normal((5, 11))
        w = rng.standard_normal((3, 5))
        assert compute_cams(z, w).min() >= 0.0


def test_normalize_rows():
    m = np.array([[2.0, 4.0], [0.0, 0.0]])
    out = normalize_cams(m)
    np.testing.assert_array_equal(out, [[0.5, 1.0], [0.0, 0.0]])


def test_normalize_idempotent(rng):
    m = np.abs(rng.standard_normal((4, 13)))
    once = normalize_cams(m)
    np.testing.assert_array_equal(normalize_cams(once), once)
    assert once.max() <= 1.0


def test_pseudo_mask_argmax_and_ties():
    m = np.array([[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_array_equal(pseudo_mask(m), [0, 1])
    zeros = np.zeros((3, 4))
    np.testing.assert_array_equal(pseudo_mask(zeros), [0, 0, 0, 0])


def test_pseudo_mask_scale_invariance(rng):
    m = np.abs(rng.standard_normal((4, 10)))
    scaled = m.copy()
    scaled[:, 3] *= 3.0
    np.testing.assert_array_equal(pseudo_mask(m), pseudo_mask(scaled))


def test_pseudo_mask_monotone_transform_invariance(rng):
    m = np.abs(rng.standard_normal((3, 8)))
    np.testing.assert_array_equal(pseudo_mask(m), pseudo_mask(np.exp(m) * 2.0))

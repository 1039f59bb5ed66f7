import numpy as np
import pytest

from recompress.block_codec import CoefficientPlane, quality_to_qmatrix
from recompress.dct_features import (
    binary_volume,
    block_to_channel_reshape,
    channel_to_block_reshape,
    clip_coeffs,
    coefficient_histogram,
    feature_volume_set,
    interior_empty_bins,
)
from recompress.errors import NotBlockAligned, PositionOutOfRange, ShapeMismatch


@pytest.fixture
def plane(rng):
    return CoefficientPlane(rng.integers(-30, 31, (16, 24)), quality_to_qmatrix(75))


def test_clip(plane):
    c = clip_coeffs(plane, 5)
    assert c.min() >= -5 and c.max() <= 5


def test_binary_volume_is_one_hot_on_magnitude(plane):
    V = binary_volume(plane, 20)
    assert V.shape == (21, 16, 24)
    np.testing.assert_array_equal(V.data.sum(axis=0), 1)
    mag = np.minimum(np.abs(plane.coeffs), 20)
    np.testing.assert_array_equal(V.data.argmax(axis=0), mag)


def test_binary_volume_rejects_bad_t(plane):
    with pytest.raises(ValueError):
        binary_volume(plane, 0)


def test_histogram_counts_and_csv(plane):
    h = coefficient_histogram(plane, (0, 1), 20)
    samples = plane.coeffs[0::8, 1::8].ravel()
    assert h.total == samples.size == 6
    assert h.counts.sum() + h.overflow == h.total
    for v in range(-20, 21):
        assert h.count(v) == int((samples == v).sum())
    lines = h.to_csv().splitlines()
    assert lines[0] == "value,count" and len(lines) == 42
    assert lines[1].startswith("-20,")


@pytest.mark.parametrize("pos", [(8, 0), (-1, 0), (0, 8)])
def test_histogram_position_checked(plane, pos):
    with pytest.raises(PositionOutOfRange):
        coefficient_histogram(plane, pos)


def test_interior_empty_bins():
    coeffs = np.zeros((8, 32), dtype=int)
    coeffs[0, 1], coeffs[0, 9], coeffs[0, 17], coeffs[0, 25] = -2, 2, 2, 0
    h = coefficient_histogram(coeffs, (0, 1), 5)
    # occupied -2, 0, 2 -> gaps at -1 and 1
    assert interior_empty_bins(h) == 2


def test_feature_volumes(plane, rng):
    V = binary_volume(plane, 3)
    R = rng.normal(size=(16, 24))
    fv = feature_volume_set(V, plane.q, R)
    np.testing.assert_array_equal(fv.dequantized[:, 8:16, 0:8], V.data[:, 8:16, 0:8] * plane.q)
    np.testing.assert_allclose(fv.residual_guided, V.data * np.abs(R))
    signed = feature_volume_set(V, plane.q, R, signed=True)
    np.testing.assert_allclose(signed.residual_guided, V.data * R)
    assert fv.concatenated().shape == (2, 3, 3 * 4 * 64)


def test_feature_volume_shape_checks(plane):
    V = binary_volume(plane, 3)
    with pytest.raises(ShapeMismatch):
        feature_volume_set(V, plane.q, np.zeros((8, 8)))


def test_block_channel_reshape_roundtrip(rng):
    plane = rng.integers(0, 100, (16, 24))
    t = block_to_channel_reshape(plane)
    assert t.shape == (2, 3, 64)
    assert t[1, 2, 8 * 3 + 5] == plane[8 + 3, 16 + 5]
    np.testing.assert_array_equal(channel_to_block_reshape(t), plane)
    with pytest.raises(NotBlockAligned):
        block_to_channel_reshape(np.zeros((12, 8)))
    with pytest.raises(ShapeMismatch):
        channel_to_block_reshape(np.zeros((2, 2, 63)))

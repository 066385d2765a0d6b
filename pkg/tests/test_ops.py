import numpy as np
import pytest

from map2sat import Rng, ShapeError, Tensor4
from map2sat import ops


def _t(arr):
    return Tensor4(np.asarray(arr, dtype=np.float32))


class TestBatchnorm:
    def test_constant_input_normalizes_to_zero(self):
        x = Tensor4.full((2, 3, 3, 2), 5.0)
        gamma = Tensor4.full((1, 1, 1, 2), 1.0)
        beta = Tensor4.zeros((1, 1, 1, 2))
        out = ops.batchnorm(x, gamma, beta, epsilon=1e-5)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_two_values_standardize_to_unit(self):
        x = _t(np.array([1.0, 3.0, 1.0, 3.0]).reshape(1, 2, 2, 1))
        gamma = Tensor4.full((1, 1, 1, 1), 1.0)
        beta = Tensor4.zeros((1, 1, 1, 1))
        out = ops.batchnorm(x, gamma, beta, epsilon=1e-12)
        np.testing.assert_allclose(
            out.data.reshape(-1), [-1.0, 1.0, -1.0, 1.0], atol=1e-6)

    def test_output_statistics_match_gamma_beta(self):
        rng = np.random.default_rng(3)
        x = Tensor4(rng.normal(4.0, 3.0, (2, 8, 8, 3)).astype(np.float32))
        gamma = _t(np.array([1.0, 2.0, 0.5]).reshape(1, 1, 1, 3))
        beta = _t(np.array([0.0, -1.0, 3.0]).reshape(1, 1, 1, 3))
        out = ops.batchnorm(x, gamma, beta, epsilon=1e-8)
        mean = out.data.mean(axis=(0, 1, 2))
        std = out.data.std(axis=(0, 1, 2))
        np.testing.assert_allclose(mean, beta.data.reshape(-1), atol=1e-4)
        np.testing.assert_allclose(std, np.abs(gamma.data.reshape(-1)), rtol=1e-4)

    def test_empty_slab_rejected(self):
        with pytest.raises(ShapeError, match="empty"):
            ops.batchnorm(Tensor4.zeros((0, 4, 4, 2)),
                          Tensor4.full((1, 1, 1, 2), 1.0),
                          Tensor4.zeros((1, 1, 1, 2)))


class TestActivations:
    def test_leaky_relu_definition(self):
        x = _t(np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 3, 1))
        out = ops.leaky_relu(x, 0.2)
        np.testing.assert_allclose(out.data.reshape(-1), [-0.2, 0.0, 2.0], rtol=1e-6)

    def test_leaky_slope_zero_is_relu(self):
        x = _t(np.linspace(-2, 2, 9).reshape(1, 3, 3, 1))
        np.testing.assert_array_equal(ops.leaky_relu(x, 0.0).data,
                                      ops.relu(x).data)

    def test_leaky_rejects_negative_slope(self):
        with pytest.raises(ValueError):
            ops.leaky_relu(Tensor4.zeros((1, 1, 1, 1)), -0.1)

    def test_pointwise_values(self):
        zero = Tensor4.zeros((1, 1, 1, 1))
        assert ops.tanh_act(zero).item() == 0.0
        assert ops.sigmoid(zero).item() == 0.5
        assert ops.relu(Tensor4.scalar(-3.0)).item() == 0.0

    def test_tanh_strictly_inside_open_interval(self):
        x = _t(np.linspace(-50, 50, 101).reshape(1, 1, 101, 1))
        out = ops.tanh_act(x)
        assert np.all(out.data > -1.0)
        assert np.all(out.data < 1.0)


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = _t(np.random.default_rng(0).standard_normal((1, 4, 4, 2)))
        out = ops.dropout(x, 0.0, Rng(1).stream("test"), active=True)
        np.testing.assert_array_equal(out.data, x.data)

    def test_inactive_is_identity(self):
        x = _t(np.random.default_rng(1).standard_normal((1, 4, 4, 2)))
        out = ops.dropout(x, 0.9, None, active=False)
        np.testing.assert_array_equal(out.data, x.data)

    def test_rate_one_rejected(self):
        with pytest.raises(ValueError, match="rate"):
            ops.dropout(Tensor4.zeros((1, 1, 1, 1)), 1.0, Rng(0).stream("test"))

    def test_survivor_scaling_preserves_mean(self):
        # mean of dropout(ones) is within 3 sigma of 1 under the binomial model
        n = 100_000
        x = Tensor4(np.ones((1, 100, 100, 10), dtype=np.float32))
        out = ops.dropout(x, 0.5, Rng(7).stream("test"), active=True)
        values = out.data.reshape(-1)
        assert set(np.unique(values)) <= {0.0, 2.0}
        sigma = 1.0 / np.sqrt(n)  # per-element variance is 1 at rate 0.5
        assert abs(values.mean() - 1.0) < 3 * sigma

    def test_mask_reproducible_from_stream(self):
        x = _t(np.random.default_rng(2).standard_normal((1, 8, 8, 4)))
        a = ops.dropout(x, 0.3, Rng(9).stream("test", 5), active=True)
        b = ops.dropout(x, 0.3, Rng(9).stream("test", 5), active=True)
        np.testing.assert_array_equal(a.data, b.data)


class TestConcatAndPad:
    def test_concat_channel_counts(self):
        a = Tensor4.zeros((1, 256, 256, 3))
        b = Tensor4.zeros((1, 256, 256, 3))
        assert ops.concat_channels(a, b).dims == (1, 256, 256, 6)

    def test_concat_with_empty_channis_identity(self):
        x = _t(np.random.default_rng(3).standard_normal((1, 4, 4, 3)))
        empty = Tensor4.zeros((1, 4, 4, 0))
        out = ops.concat_channels(x, empty)
        np.testing.assert_array_equal(out.data, x.data)

    def test_split_of_concat_roundtrips(self):
        rng = np.random.default_rng(4)
        a = _t(rng.standard_normal((1, 5, 5, 2)))
        b = _t(rng.standard_normal((1, 5, 5, 3)))
        merged = ops.concat_channels(a, b)
        np.testing.assert_array_equal(merged.data[..., :2], a.data)
        np.testing.assert_array_equal(merged.data[..., 2:], b.data)

    def test_concat_rejects_spatial_mismatch(self):
        with pytest.raises(ShapeError, match="spatial"):
            ops.concat_channels(Tensor4.zeros((1, 4, 4, 1)),
                                Tensor4.zeros((1, 5, 4, 1)))

    def test_zero_pad_shapes(self):
        assert ops.zero_pad(Tensor4.zeros((1, 32, 32, 256))).dims == (1, 34, 34, 256)
        assert ops.zero_pad(Tensor4.zeros((1, 31, 31, 512))).dims == (1, 33, 33, 512)

    def test_zero_pad_border_zero_then_crop_identity(self):
        x = _t(np.random.default_rng(5).standard_normal((1, 4, 4, 2)))
        padded = ops.zero_pad(x)
        assert not padded.data[:, 0, :, :].any()
        assert not padded.data[:, -1, :, :].any()
        assert not padded.data[:, :, 0, :].any()
        assert not padded.data[:, :, -1, :].any()
        np.testing.assert_array_equal(padded.data[:, 1:-1, 1:-1, :], x.data)

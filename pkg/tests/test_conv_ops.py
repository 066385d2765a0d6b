import numpy as np
import pytest

from map2sat import ShapeError, Tensor4
from map2sat import ops
from map2sat.kernels import numpy_backend
from map2sat import kernels


def _t(shape, seed=0, dtype=np.float32):
    return Tensor4(np.random.default_rng(seed).standard_normal(shape).astype(dtype))


def test_conv_shape_256_to_128_64_filters():
    x = _t((1, 256, 256, 3))
    w = _t((4, 4, 3, 64), 1)
    b = Tensor4.zeros((1, 1, 1, 64))
    out = ops.conv2d(x, w, b, stride=2, padding="same")
    assert out.dims == (1, 128, 128, 64)


def test_conv_scalar_multiply():
    x = Tensor4(np.array([[[[2.0]]]], dtype=np.float32))
    w = Tensor4(np.array([[[[3.0]]]], dtype=np.float32))
    b = Tensor4.zeros((1, 1, 1, 1))
    out = ops.conv2d(x, w, b, stride=1, padding="same")
    assert out.item() == 6.0


def test_conv_out_extents():
    # same: ceil(H/stride); valid: floor((H - k)/stride) + 1
    assert ops.conv_out_extent(256, 4, 2, "same") == 128
    assert ops.conv_out_extent(5, 4, 2, "same") == 3
    assert ops.conv_out_extent(6, 4, 2, "valid") == 2
    assert ops.conv_out_extent(34, 4, 1, "valid") == 31
    with pytest.raises(ShapeError):
        ops.conv_out_extent(3, 4, 1, "valid")


def test_conv_same_padding_extra_on_bottom_right():
    # odd total padding puts the extra pixel after
    assert ops.same_pads(1, 4, 2) == (1, 2)
    assert ops.same_pads(256, 4, 2) == (1, 1)


def test_conv_rejects_channel_mismatch_naming_shapes():
    x = _t((1, 8, 8, 3))
    w = _t((4, 4, 2, 5), 1)
    with pytest.raises(ShapeError) as exc:
        ops.conv2d(x, w, None)
    msg = str(exc.value)
    assert "(1, 8, 8, 3)" in msg and "(4, 4, 2, 5)" in msg


def test_conv_bias_applied_per_channel():
    x = Tensor4(np.ones((1, 4, 4, 1), dtype=np.float32))
    w = Tensor4.zeros((1, 1, 1, 2))
    b = Tensor4(np.array([1.0, -2.0], dtype=np.float32).reshape(1, 1, 1, 2))
    out = ops.conv2d(x, w, b, stride=1, padding="same")
    assert np.all(out.data[..., 0] == 1.0)
    assert np.all(out.data[..., 1] == -2.0)


def test_tconv_doubles_spatial_extent():
    # decoder entry shapes: 1x1 -> 2x2 and 2x2 -> 4x4 at 512 channels
    w = _t((4, 4, 512, 512), 2)
    b = Tensor4.zeros((1, 1, 1, 512))
    assert ops.conv2d_transpose(_t((1, 1, 1, 512), 3), w, b).dims == (1, 2, 2, 512)
    assert ops.conv2d_transpose(_t((1, 2, 2, 512), 4), w, b).dims == (1, 4, 4, 512)


def test_tconv_rejects_kernel_smaller_than_stride():
    with pytest.raises(ShapeError, match="smaller than stride"):
        ops.conv2d_transpose(_t((1, 2, 2, 1)), _t((1, 1, 1, 1), 1), None, stride=2)


@pytest.mark.parametrize("hw,ci,co", [(8, 3, 5), (6, 4, 2)])
def test_conv_tconv_adjoint_identity(hw, ci, co):
    # <conv2d(a), b> == <a, conv2d_transpose(b)> for a shared weight
    rng = np.random.default_rng(7)
    a = Tensor4(rng.standard_normal((1, hw, hw, ci)).astype(np.float32))
    w = Tensor4(rng.standard_normal((4, 4, ci, co)).astype(np.float32))
    bdims = (1, hw // 2, hw // 2, co)
    b = Tensor4(rng.standard_normal(bdims).astype(np.float32))
    lhs = float((ops.conv2d(a, w, None, 2, "same").data.astype(np.float64)
                 * b.data.astype(np.float64)).sum())
    rhs = float((a.data.astype(np.float64)
                 * ops.conv2d_transpose(b, w, None, 2).data.astype(np.float64)).sum())
    assert abs(lhs - rhs) / max(abs(lhs), abs(rhs)) < 1e-4


def test_tconv_backward_input_is_forward_conv():
    # the adjoint relationship, checked op-to-op on the same weight
    from map2sat import Tape
    rng = np.random.default_rng(8)
    x = Tensor4(rng.standard_normal((1, 3, 3, 2)).astype(np.float32))
    w = Tensor4(rng.standard_normal((4, 4, 5, 2)).astype(np.float32))
    tape = Tape()
    out = ops.conv2d_transpose(x, w, None, 2, tape)
    g = rng.standard_normal(out.dims).astype(np.float32)
    dx = tape.nodes[-1].backward(g)[0]
    expected = ops.conv2d(Tensor4(g), w, None, 2, "same").data
    np.testing.assert_array_equal(dx, expected)


def test_conv_deterministic_bitwise():
    x = _t((1, 16, 16, 8), 5)
    w = _t((4, 4, 8, 8), 6)
    b = _t((1, 1, 1, 8), 7)
    out1 = ops.conv2d(x, w, b, 2, "same").data
    out2 = ops.conv2d(x, w, b, 2, "same").data
    np.testing.assert_array_equal(out1, out2)


@pytest.mark.skipif(not kernels.have_compiled(), reason="compiled core not built")
@pytest.mark.parametrize("xs,ws,stride,pads", [
    ((1, 16, 16, 8), (4, 4, 8, 12), 2, (1, 1, 1, 1)),
    ((2, 9, 9, 3), (3, 3, 3, 5), 1, (1, 1, 1, 1)),
    ((1, 7, 7, 4), (4, 4, 4, 6), 1, (0, 0, 0, 0)),
])
def test_backends_agree(xs, ws, stride, pads):
    rng = np.random.default_rng(11)
    x = rng.standard_normal(xs).astype(np.float32)
    w = rng.standard_normal(ws).astype(np.float32)
    b = rng.standard_normal((1, 1, 1, ws[3])).astype(np.float32)
    ref = numpy_backend.conv_forward(x, w, b, stride, pads)
    got = kernels._convcore.conv_forward_f32(x, w, b, stride, *pads)
    np.testing.assert_allclose(got, ref, rtol=1e-5, atol=1e-5)

    oh, ow = ref.shape[1], ref.shape[2]
    g = rng.standard_normal((xs[0], oh, ow, ws[3])).astype(np.float32)
    ref_dx = numpy_backend.conv_dinput(g, w, stride, pads, (xs[1], xs[2]))
    got_dx = kernels._convcore.conv_dinput_f32(g, w, stride, *pads, xs[1], xs[2])
    np.testing.assert_allclose(got_dx, ref_dx, rtol=1e-5, atol=1e-5)

    ref_dw = numpy_backend.conv_dweight(x, g, ws[0], ws[1], stride, pads)
    got_dw = kernels._convcore.conv_dweight_f32(x, g, ws[0], ws[1], stride, *pads)
    np.testing.assert_allclose(got_dw, ref_dw, rtol=1e-5, atol=1e-5)


def test_float64_tensors_route_and_compute():
    x = _t((1, 8, 8, 2), 12, np.float64)
    w = _t((4, 4, 2, 3), 13, np.float64)
    out = ops.conv2d(x, w, None, 2, "same")
    assert out.dtype == np.float64


def test_mixed_dtypes_rejected():
    x = _t((1, 8, 8, 2), 14, np.float32)
    w = _t((4, 4, 2, 3), 15, np.float64)
    with pytest.raises(ShapeError, match="mixed dtypes"):
        ops.conv2d(x, w, None)

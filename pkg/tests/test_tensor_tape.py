import numpy as np
import pytest

from map2sat import ParamStore, ShapeError, Tape, Tensor4, as_leaf, backward
from map2sat import ops


def test_tensor_requires_rank4():
    with pytest.raises(ShapeError):
        Tensor4(np.zeros((2, 3)))
    t = Tensor4(np.zeros((1, 2, 3, 4), dtype=np.float32))
    assert t.dims == (1, 2, 3, 4)
    assert t.size == 24


def test_tensor_zero_extents_allowed():
    t = Tensor4(np.zeros((1, 4, 4, 0), dtype=np.float32))
    assert t.dims == (1, 4, 4, 0)
    assert t.data.size == 0


def test_scalar_item():
    assert Tensor4.scalar(2.5).item() == 2.5
    with pytest.raises(ShapeError):
        Tensor4.zeros((1, 2, 1, 1)).item()


def test_paramstore_rejects_duplicates_and_orders():
    store = ParamStore()
    store.add("a/w", Tensor4.zeros((1, 1, 1, 2)))
    store.add("b/w", Tensor4.zeros((1, 1, 1, 3)))
    with pytest.raises(ValueError, match="duplicate"):
        store.add("a/w", Tensor4.zeros((1, 1, 1, 2)))
    assert store.names() == ["a/w", "b/w"]
    assert store.total_params() == 5


def test_paramstore_grad_buffers_match_dims():
    store = ParamStore()
    t = store.add("w", Tensor4.zeros((2, 3, 4, 5)))
    assert t.grad is not None and t.grad.shape == (2, 3, 4, 5)
    t.grad += 1.0
    store.zero_grads()
    assert not t.grad.any()


def _weighted_sum(x: Tensor4, c: np.ndarray, tape: Tape) -> Tensor4:
    # sum(x * c) realized as a valid convolution with kernel c over the
    # full extent: output is 1x1x1x1.
    _, h, w, ch = x.dims
    kernel = Tensor4(np.ascontiguousarray(c[0])[..., None])
    return ops.conv2d(x, kernel, None, stride=1, padding="valid", tape=tape)


def test_backward_linear_function_grad_is_coefficient():
    # loss = sum(w * c) for constant c  ->  grad(w) = c
    rng = np.random.default_rng(0)
    w = as_leaf(Tensor4(rng.standard_normal((1, 3, 3, 2)).astype(np.float32)))
    c = rng.standard_normal((1, 3, 3, 2)).astype(np.float32)
    tape = Tape()
    loss = _weighted_sum(w, c, tape)
    backward(tape, loss)
    np.testing.assert_allclose(w.grad, c, rtol=1e-5, atol=1e-6)


def test_backward_two_consumers_gradients_add():
    rng = np.random.default_rng(1)
    x = as_leaf(Tensor4(rng.standard_normal((1, 3, 3, 2)).astype(np.float32)))
    c1 = rng.standard_normal((1, 3, 3, 2)).astype(np.float32)
    c2 = rng.standard_normal((1, 3, 3, 2)).astype(np.float32)
    tape = Tape()
    loss = ops.add(_weighted_sum(x, c1, tape), _weighted_sum(x, c2, tape), tape)
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, c1 + c2, rtol=1e-5, atol=1e-5)


def test_backward_accumulates_across_calls():
    rng = np.random.default_rng(2)
    w = as_leaf(Tensor4(rng.standard_normal((1, 2, 2, 1)).astype(np.float32)))
    c = rng.standard_normal((1, 2, 2, 1)).astype(np.float32)
    tape = Tape()
    loss = _weighted_sum(w, c, tape)
    backward(tape, loss)
    backward(tape, loss)
    np.testing.assert_allclose(w.grad, 2 * c, rtol=1e-5, atol=1e-6)


def test_backward_rejects_loss_not_on_tape():
    tape = Tape()
    with pytest.raises(ValueError, match="not produced on this tape"):
        backward(tape, Tensor4.scalar(1.0))


def test_backward_rejects_non_scalar_loss():
    x = Tensor4.zeros((1, 2, 2, 1))
    tape = Tape()
    out = ops.relu(x, tape)
    with pytest.raises(ShapeError, match="1x1x1x1"):
        backward(tape, out)


def test_tape_clear_frees_nodes():
    tape = Tape()
    ops.relu(Tensor4.zeros((1, 2, 2, 1)), tape)
    assert len(tape) == 1
    tape.clear()
    assert len(tape) == 0

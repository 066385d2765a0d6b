import numpy as np
import pytest
from PIL import Image

from map2sat import ShapeError, Tensor4
from map2sat.imgio import (ImageFormatError, ImagePair, decode_image, encode_png,
                           load_combined, make_triptych, to_pixels, write_combined)


def _write_png(path, arr):
    Image.fromarray(arr.astype(np.uint8)).save(path, format="PNG")


def test_load_combined_splits_width(tmp_path):
    # 1200x600 combined file -> two 600x600 halves
    rng = np.random.default_rng(0)
    arr = rng.integers(0, 256, (600, 1200, 3), dtype=np.uint8)
    path = tmp_path / "combined.png"
    _write_png(path, arr)
    pair = load_combined(path)
    assert pair.input_map.dims == (1, 600, 600, 3)
    assert pair.target_truth.dims == (1, 600, 600, 3)


def test_load_combined_white_left_black_right(tmp_path):
    arr = np.zeros((2, 4, 3), dtype=np.uint8)
    arr[:, :2, :] = 255
    path = tmp_path / "wb.png"
    _write_png(path, arr)
    pair = load_combined(path)
    assert np.all(pair.input_map.data == 255.0)
    assert np.all(pair.target_truth.data == 0.0)
    flipped = load_combined(path, pair_order="map-right")
    assert np.all(flipped.input_map.data == 0.0)


def test_load_combined_rejects_odd_width(tmp_path):
    arr = np.zeros((3, 601, 3), dtype=np.uint8)
    path = tmp_path / "odd.png"
    _write_png(path, arr)
    with pytest.raises(ImageFormatError, match="odd combined width"):
        load_combined(path)


def test_decode_rejects_grayscale_and_unreadable(tmp_path):
    gray = tmp_path / "gray.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(gray)
    with pytest.raises(ImageFormatError, match="mode 'L'"):
        decode_image(gray)
    bogus = tmp_path / "bogus.png"
    bogus.write_bytes(b"not an image")
    with pytest.raises(ImageFormatError, match="unreadable"):
        decode_image(bogus)


def test_split_reassembles_exactly(tmp_path):
    rng = np.random.default_rng(1)
    arr = rng.integers(0, 256, (8, 12, 3), dtype=np.uint8)
    path = tmp_path / "c.png"
    _write_png(path, arr)
    pair = load_combined(path)
    rejoined = np.concatenate([pair.input_map.data, pair.target_truth.data], axis=2)
    np.testing.assert_array_equal(rejoined[0], arr.astype(np.float32))


def test_halves_do_not_alias(tmp_path):
    arr = np.zeros((2, 4, 3), dtype=np.uint8)
    path = tmp_path / "a.png"
    _write_png(path, arr)
    pair = load_combined(path)
    pair.input_map.data[...] = 7.0
    assert not np.any(pair.target_truth.data == 7.0)


def test_encode_endpoints(tmp_path):
    black = tmp_path / "black.png"
    encode_png(Tensor4.full((1, 4, 4, 3), -1.0), black)
    assert np.all(np.asarray(Image.open(black)) == 0)
    white = tmp_path / "white.png"
    encode_png(Tensor4.full((1, 4, 4, 3), 1.0), white)
    assert np.all(np.asarray(Image.open(white)) == 255)


def test_encode_midpoint_rounds_half_up():
    pix = to_pixels(Tensor4.zeros((1, 1, 1, 3)))
    assert np.all(pix == 128)


def test_encode_decode_roundtrip_bound(tmp_path):
    # quantization error in [-1, 1] space is at most one half step
    rng = np.random.default_rng(2)
    t = Tensor4(rng.uniform(-1, 1, (1, 16, 16, 3)).astype(np.float32))
    path = tmp_path / "rt.png"
    encode_png(t, path)
    back = decode_image(path)
    renorm = (back.data.astype(np.float64) - 127.5) / 127.5
    assert np.abs(renorm - t.data.astype(np.float64)).max() <= 1.0 / 127.5


def test_encode_png_deterministic(tmp_path):
    t = Tensor4(np.random.default_rng(3).uniform(-1, 1, (1, 8, 8, 3)).astype(np.float32))
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    encode_png(t, p1)
    encode_png(t, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_write_combined_inverts_load(tmp_path):
    rng = np.random.default_rng(4)
    m = Tensor4(rng.integers(0, 256, (1, 6, 6, 3)).astype(np.float32))
    t = Tensor4(rng.integers(0, 256, (1, 6, 6, 3)).astype(np.float32))
    path = tmp_path / "pair.png"
    write_combined(m, t, path)
    pair = load_combined(path)
    np.testing.assert_array_equal(pair.input_map.data, m.data)
    np.testing.assert_array_equal(pair.target_truth.data, t.data)


class TestTriptych:
    def test_width_is_tripled(self):
        t = Tensor4.zeros((1, 256, 256, 3))
        assert make_triptych(t, t, t).dims == (1, 256, 768, 3)

    def test_panel_placement(self):
        rng = np.random.default_rng(5)
        a = Tensor4(rng.standard_normal((1, 4, 4, 3)).astype(np.float32))
        b = Tensor4(rng.standard_normal((1, 4, 4, 3)).astype(np.float32))
        c = Tensor4(rng.standard_normal((1, 4, 4, 3)).astype(np.float32))
        out = make_triptych(a, b, c)
        np.testing.assert_array_equal(out.data[:, :, :4], a.data)
        np.testing.assert_array_equal(out.data[:, :, 4:8], b.data)
        np.testing.assert_array_equal(out.data[:, :, 8:], c.data)

    def test_identical_panels(self):
        x = Tensor4(np.random.default_rng(6).standard_normal((1, 4, 4, 3))
                    .astype(np.float32))
        out = make_triptych(x, x, x)
        np.testing.assert_array_equal(out.data[:, :, :4], out.data[:, :, 4:8])
        np.testing.assert_array_equal(out.data[:, :, :4], out.data[:, :, 8:])

    def test_rejects_mismatched_panels(self):
        with pytest.raises(ShapeError):
            make_triptych(Tensor4.zeros((1, 4, 4, 3)), Tensor4.zeros((1, 4, 4, 3)),
                          Tensor4.zeros((1, 4, 5, 3)))


def test_image_pair_requires_matching_dims():
    with pytest.raises(ShapeError):
        ImagePair(Tensor4.zeros((1, 4, 4, 3)), Tensor4.zeros((1, 4, 5, 3)))

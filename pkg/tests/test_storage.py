import numpy as np
import pytest

from phytoseg.errors import DataError
from phytoseg.storage import (
    load_image,
    load_label_raster,
    load_mask_png,
    read_header_payload,
    save_image_png,
    save_label_png,
    save_mask_png,
    write_header_payload,
)


def test_header_payload_round_trip(tmp_path, rng):
    a = rng.standard_normal((3, 4)).astype(np.float32)
    b = rng.standard_normal(7).astype(np.float32)
    path = tmp_path / "blob.bin"
    write_header_payload(path, {"kind": "test", "n": 2}, [a, b])
    header, payload = read_header_payload(path)
    assert header["kind"] == "test" and header["n"] == 2
    np.testing.assert_array_equal(payload[:12].reshape(3, 4), a)
    np.testing.assert_array_equal(payload[12:], b)


def test_header_payload_supports_f64(tmp_path, rng):
    a = rng.standard_normal(5)
    path = tmp_path / "blob64.bin"
    write_header_payload(path, {}, [a], dtype="<f8")
    _, payload = read_header_payload(path)
    assert payload.dtype == np.dtype("<f8")
    np.testing.assert_array_equal(payload, a)


def test_header_payload_overwrite_is_atomic_by_rename(tmp_path, rng):
    path = tmp_path / "blob.bin"
    write_header_payload(path, {"v": 1}, [np.zeros(3, dtype=np.float32)])
    write_header_payload(path, {"v": 2}, [np.ones(3, dtype=np.float32)])
    header, payload = read_header_payload(path)
    assert header["v"] == 2
    assert payload.sum() == 3
    assert list(tmp_path.iterdir()) == [path]  # no temp files left behind


def test_mask_png_round_trip(tmp_path, rng):
    mask = rng.random((20, 30)) < 0.5
    path = tmp_path / "m.png"
    save_mask_png(path, mask)
    np.testing.assert_array_equal(load_mask_png(path), mask)


def test_image_png_round_trip(tmp_path, rng):
    image = rng.integers(0, 256, size=(12, 9, 3), dtype=np.uint8)
    path = tmp_path / "img.png"
    save_image_png(path, image)
    np.testing.assert_array_equal(load_image(path), image)


def test_label_png_round_trip(tmp_path, rng):
    labels = rng.integers(0, 5, size=(16, 16)).astype(np.uint8)
    path = tmp_path / "lab.png"
    save_label_png(path, labels)
    np.testing.assert_array_equal(load_label_raster(path), labels)


def test_label_png_rejects_out_of_range(tmp_path):
    with pytest.raises(DataError):
        save_label_png(tmp_path / "bad.png", np.array([[0, 300]]))
    with pytest.raises(DataError):
        save_label_png(tmp_path / "bad.png", np.array([[-1, 0]]))


def test_label_raster_accepts_rgb_when_channels_agree(tmp_path):
    gray = np.full((4, 4, 3), 7, dtype=np.uint8)
    path = tmp_path / "rgb.png"
    save_image_png(path, gray)
    np.testing.assert_array_equal(load_label_raster(path), np.full((4, 4), 7))


def test_label_raster_rejects_true_color(tmp_path):
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    rgb[..., 0] = 10  # channels disagree: not a label raster
    path = tmp_path / "color.png"
    save_image_png(path, rgb)
    with pytest.raises(DataError):
        load_label_raster(path)

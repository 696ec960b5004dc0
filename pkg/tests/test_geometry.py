import numpy as np
import pytest

import oracles
from phytoseg.errors import SizingError
from phytoseg.geometry import (
    GeometrySpec,
    apply_geometry,
    apply_geometry_mask,
    compute_pad_mask,
    plan_geometry,
    restore_mask,
    token_box_to_pixel_box,
)


def test_plan_small_image_passes_through():
    spec = plan_geometry(1000, 1500)
    assert spec.scale == 1.0
    assert (spec.resized_h, spec.resized_w) == (1000, 1500)
    assert (spec.padded_h, spec.padded_w) == (1008, 1512)
    assert (spec.token_rows, spec.token_cols) == (72, 108)


def test_plan_exact_cap_needs_no_work():
    spec = plan_geometry(1036, 1036)
    assert spec.scale == 1.0
    assert (spec.padded_h, spec.padded_w) == (1036, 1036)
    assert (spec.token_rows, spec.token_cols) == (74, 74)
    assert spec.pad_bottom == 0 and spec.pad_right == 0


def test_plan_downscales_large_image():
    spec = plan_geometry(2072, 3000)
    assert spec.scale == pytest.approx(0.5)
    assert (spec.resized_h, spec.resized_w) == (1036, 1500)
    assert (spec.padded_h, spec.padded_w) == (1036, 1512)
    assert (spec.token_rows, spec.token_cols) == (74, 108)


def test_plan_rejects_subpatch_dims():
    with pytest.raises(SizingError):
        plan_geometry(13, 100)
    with pytest.raises(SizingError):
        plan_geometry(100, 5)


def test_plan_invariants_on_random_sizes(rng):
    for _ in range(300):
        h = int(rng.integers(14, 4000))
        w = int(rng.integers(14, 4000))
        spec = plan_geometry(h, w)
        assert spec.padded_h % 14 == 0 and spec.padded_w % 14 == 0
        assert min(spec.resized_h, spec.resized_w) <= 1036
        assert 0 <= spec.pad_bottom <= 13 and 0 <= spec.pad_right <= 13
        assert spec.token_rows == spec.padded_h // 14
        if min(h, w) <= 1036:
            assert spec.scale == 1.0
        else:
            assert spec.scale == pytest.approx(1036 / min(h, w))


def test_plan_is_idempotent_on_padded_dims(rng):
    for _ in range(50):
        h = int(rng.integers(14, 5000))
        w = int(rng.integers(14, 5000))
        spec = plan_geometry(h, w)
        again = plan_geometry(spec.padded_h, spec.padded_w)
        assert again.scale == 1.0
        assert again.pad_bottom == 0 and again.pad_right == 0


def test_spec_json_round_trip():
    spec = plan_geometry(2072, 3000)
    assert GeometrySpec.from_json(spec.to_json()) == spec


def test_apply_identity_spec_copies_pixels(rng):
    image = rng.integers(0, 256, size=(28, 42, 3), dtype=np.uint8)
    spec = plan_geometry(28, 42)
    out = apply_geometry(image, spec)
    assert out.shape == (28, 42, 3)
    np.testing.assert_array_equal(out, image)


def test_apply_pads_bottom_right_with_zeros(rng):
    image = rng.integers(1, 256, size=(1000, 1500, 3), dtype=np.uint8)
    spec = plan_geometry(1000, 1500)
    out = apply_geometry(image, spec)
    assert out.shape == (1008, 1512, 3)
    np.testing.assert_array_equal(out[:1000, :1500], image)
    assert not out[1000:, :].any()
    assert not out[:, 1500:].any()


def test_apply_rejects_wrong_dims(rng):
    image = rng.integers(0, 256, size=(30, 30, 3), dtype=np.uint8)
    with pytest.raises(SizingError):
        apply_geometry(image, plan_geometry(28, 28))


def test_bilinear_downscale_matches_reference_within_one_level(rng):
    # scale is exactly 0.5 here, the spec's worked case
    image = rng.integers(0, 256, size=(2072, 2100, 3), dtype=np.uint8)
    spec = plan_geometry(2072, 2100)
    assert spec.scale == pytest.approx(0.5)
    out = apply_geometry(image, spec).astype(np.float64)
    # compare a band, the reference resampler is slow
    ref = oracles.bilinear_resize(image[:, :64], spec.resized_h, 32)
    diff = np.abs(out[: spec.resized_h, :32] - ref)
    assert diff.max() <= 1.0 + 1e-9


def test_restore_all_ones_and_zeros(rng):
    for h, w in [(100, 64), (2072, 3000)]:
        spec = plan_geometry(h, w)
        ones = np.ones((spec.token_rows, spec.token_cols), dtype=bool)
        zeros = np.zeros_like(ones)
        assert restore_mask(ones, spec).all()
        assert not restore_mask(zeros, spec).any()
        assert restore_mask(ones, spec).shape == (h, w)


def test_restore_single_token_block():
    spec = plan_geometry(70, 84)  # 5x6 tokens, no resize, no pad
    mask = np.zeros((5, 6), dtype=bool)
    mask[2, 3] = True
    out = restore_mask(mask, spec)
    expected = np.zeros((70, 84), dtype=bool)
    expected[28:42, 42:56] = True
    np.testing.assert_array_equal(out, expected)


def test_restore_matches_composed_reference_exactly(rng):
    spec = plan_geometry(2072, 2100)  # scale 0.5
    for _ in range(3):
        mask = rng.random((spec.token_rows, spec.token_cols)) < 0.4
        got = restore_mask(mask, spec)
        want = oracles.restore_mask_reference(mask, spec)
        np.testing.assert_array_equal(got, want.astype(bool))


def test_restore_accepts_padded_resolution(rng):
    spec = plan_geometry(100, 64)
    padded = rng.random((spec.padded_h, spec.padded_w)) < 0.5
    out = restore_mask(padded, spec)
    assert out.shape == (100, 64)
    np.testing.assert_array_equal(out, padded[:100, :64])


def test_restore_rejects_unknown_resolution():
    spec = plan_geometry(100, 64)
    with pytest.raises(SizingError):
        restore_mask(np.zeros((3, 3), dtype=bool), spec)


def test_token_box_examples():
    spec = plan_geometry(140, 140)
    assert token_box_to_pixel_box((2, 3, 4, 5), spec) == (42, 28, 83, 69)
    assert token_box_to_pixel_box((0, 0, 0, 0), spec) == (0, 0, 13, 13)


def test_token_box_matches_pixel_enumeration(rng):
    spec = plan_geometry(140, 140)
    for _ in range(20):
        r0, c0 = rng.integers(0, 9, size=2)
        r1 = int(rng.integers(r0, 10))
        c1 = int(rng.integers(c0, 10))
        got = token_box_to_pixel_box((r0, c0, r1, c1), spec)
        assert got == oracles.token_box_pixel_extent(r0, c0, r1, c1)


def test_token_box_clips_to_content_region():
    spec = plan_geometry(140, 132)  # pad_right 8
    assert spec.pad_right == 8
    box = token_box_to_pixel_box((0, 0, spec.token_rows - 1, spec.token_cols - 1), spec)
    assert box[2] == spec.resized_w - 1
    assert box[3] == spec.resized_h - 1


def test_token_box_area_before_clipping():
    spec = plan_geometry(280, 280)
    x0, y0, x1, y1 = token_box_to_pixel_box((3, 2, 7, 9), spec)
    token_area = (7 - 3 + 1) * (9 - 2 + 1)
    assert (x1 - x0 + 1) * (y1 - y0 + 1) == 196 * token_area


def test_token_box_rejects_empty_and_out_of_grid():
    spec = plan_geometry(140, 140)
    with pytest.raises(SizingError):
        token_box_to_pixel_box((3, 3, 2, 5), spec)
    with pytest.raises(SizingError):
        token_box_to_pixel_box((0, 0, 10, 2), spec)


def test_pixel_to_token_round_trip(rng):
    for _ in range(200):
        h = int(rng.integers(14, 2500))
        w = int(rng.integers(14, 2500))
        spec = plan_geometry(h, w)
        r = int(rng.integers(0, spec.token_rows))
        c = int(rng.integers(0, spec.token_cols))
        x0, y0, x1, y1 = (14 * c, 14 * r, 14 * (c + 1) - 1, 14 * (r + 1) - 1)
        for y, x in [(y0, x0), (y0, x1), (y1, x0), (y1, x1)]:
            assert y // 14 == r and x // 14 == c


def test_apply_geometry_mask_round_trips_through_restore(rng):
    spec = plan_geometry(100, 64)
    mask = rng.random((100, 64)) < 0.5
    padded = apply_geometry_mask(mask, spec)
    assert padded.shape == (spec.padded_h, spec.padded_w)
    np.testing.assert_array_equal(restore_mask(padded, spec), mask)


def test_pad_mask_all_false_for_planned_specs(rng):
    for _ in range(30):
        h = int(rng.integers(14, 3000))
        w = int(rng.integers(14, 3000))
        assert not compute_pad_mask(plan_geometry(h, w)).any()


def test_pad_mask_marks_fully_padded_tokens():
    # hand-built spec with a full patch of padding
    spec = GeometrySpec(orig_h=14, orig_w=14, scale=1.0, resized_h=14,
                        resized_w=14, padded_h=28, padded_w=14,
                        pad_bottom=14, pad_right=0)
    mask = compute_pad_mask(spec)
    assert mask.shape == (2, 1)
    assert not mask[0, 0] and mask[1, 0]

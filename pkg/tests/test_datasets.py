import logging

import numpy as np
import pytest

from phytoseg import datasets, fixtures
from phytoseg.errors import DataError
from phytoseg.storage import save_image_png, save_label_png

from oracles import nonzero_membership


@pytest.fixture(scope="module", params=datasets.DATASET_IDS)
def mini_root(request, tmp_path_factory):
    root = tmp_path_factory.mktemp(request.param)
    fixtures.write_mini_dataset(request.param, root, seed=0)
    return request.param, root


def test_mini_layout_loads_with_expected_counts(mini_root):
    dataset_id, root = mini_root
    for split, count in (("train", 4), ("val", 3), ("test", 2)):
        records = datasets.load(dataset_id, root, split)
        assert len(records) == count
        assert [r.id for r in records] == sorted(r.id for r in records)
        for rec in records:
            assert rec.split == split
            assert rec.dataset_id == dataset_id
            assert rec.mask_path is not None
            image = rec.load_image()
            gt = rec.load_gt_mask()
            assert image.dtype == np.uint8 and image.ndim == 3
            assert gt.dtype == bool
            assert gt.shape == image.shape[:2]
            assert 0.0 < gt.mean() < 1.0


def test_cvppp_ids_carry_subset_prefix(tmp_path):
    fixtures.write_mini_dataset("cvppp2017", tmp_path, seed=1)
    records = datasets.load("cvppp2017", tmp_path, "train")
    assert all(r.id.startswith("A1_") for r in records)


def test_unknown_dataset_and_split_rejected(tmp_path):
    with pytest.raises(DataError):
        datasets.load("cornfield", tmp_path, "train")
    with pytest.raises(DataError):
        datasets.load("appletree", tmp_path, "holdout")


def test_missing_root_error_mentions_layout(tmp_path):
    with pytest.raises(DataError) as err:
        datasets.load("phenobench", tmp_path / "nowhere", "train")
    assert "layout" in str(err.value)


def test_missing_split_dir_warns_and_returns_empty(tmp_path, caplog):
    (tmp_path / "train" / "images").mkdir(parents=True)
    with caplog.at_level(logging.WARNING):
        records = datasets.load("appletree", tmp_path, "val")
    assert records == []
    assert any("missing" in rec.message for rec in caplog.records)


def test_empty_images_dir_warns_and_returns_empty(tmp_path, caplog):
    (tmp_path / "train" / "images").mkdir(parents=True)
    (tmp_path / "train" / "masks").mkdir(parents=True)
    with caplog.at_level(logging.WARNING):
        records = datasets.load("appletree", tmp_path, "train")
    assert records == []
    assert any("no images" in rec.message for rec in caplog.records)


def test_orphan_image_is_a_pairing_error(tmp_path, rng):
    img_dir = tmp_path / "train" / "images"
    mask_dir = tmp_path / "train" / "masks"
    img_dir.mkdir(parents=True)
    mask_dir.mkdir(parents=True)
    image = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    save_image_png(img_dir / "a.png", image)
    save_image_png(img_dir / "b.png", image)
    save_label_png(mask_dir / "a.png", np.zeros((20, 20), dtype=np.uint8))
    with pytest.raises(DataError) as err:
        datasets.load("appletree", tmp_path, "train")
    assert "b" in str(err.value)


def test_orphan_mask_is_a_pairing_error(tmp_path, rng):
    img_dir = tmp_path / "train" / "images"
    mask_dir = tmp_path / "train" / "masks"
    img_dir.mkdir(parents=True)
    mask_dir.mkdir(parents=True)
    image = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    save_image_png(img_dir / "a.png", image)
    save_label_png(mask_dir / "a.png", np.zeros((20, 20), dtype=np.uint8))
    save_label_png(mask_dir / "stray.png", np.zeros((20, 20), dtype=np.uint8))
    with pytest.raises(DataError) as err:
        datasets.load("appletree", tmp_path, "train")
    assert "stray" in str(err.value)


def test_missing_masks_dir_yields_unlabeled_records(tmp_path, rng, caplog):
    img_dir = tmp_path / "test" / "images"
    img_dir.mkdir(parents=True)
    image = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    save_image_png(img_dir / "a.png", image)
    with caplog.at_level(logging.WARNING):
        records = datasets.load("plantgrowth", tmp_path, "test")
    assert len(records) == 1
    assert records[0].mask_path is None
    assert records[0].load_gt_mask() is None
    assert any("ground truth" in rec.message for rec in caplog.records)


def test_cvppp_flat_layout_without_subsets(tmp_path, rng):
    split_dir = tmp_path / "train"
    split_dir.mkdir(parents=True)
    image = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    save_image_png(split_dir / "plant007_rgb.png", image)
    save_label_png(split_dir / "plant007_label.png",
                   np.zeros((20, 20), dtype=np.uint8))
    records = datasets.load("cvppp2017", tmp_path, "train")
    assert [r.id for r in records] == ["plant007"]


def test_cvppp_falls_back_to_fg_mask(tmp_path, rng):
    sub = tmp_path / "train" / "A2"
    sub.mkdir(parents=True)
    image = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    save_image_png(sub / "plant001_rgb.png", image)
    fg = np.zeros((20, 20), dtype=np.uint8)
    fg[5:12, 5:12] = 255
    save_label_png(sub / "plant001_fg.png", fg)
    (rec,) = datasets.load("cvppp2017", tmp_path, "train")
    assert rec.mask_path.name == "plant001_fg.png"
    assert rec.load_gt_mask().sum() == 49


def test_cvppp_rgb_without_annotation_is_an_error(tmp_path, rng):
    sub = tmp_path / "train" / "A1"
    sub.mkdir(parents=True)
    image = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    save_image_png(sub / "plant001_rgb.png", image)
    with pytest.raises(DataError) as err:
        datasets.load("cvppp2017", tmp_path, "train")
    assert "plant001_rgb.png" in str(err.value)


def test_mask_image_size_mismatch_rejected(tmp_path, rng):
    img_dir = tmp_path / "train" / "images"
    mask_dir = tmp_path / "train" / "masks"
    img_dir.mkdir(parents=True)
    mask_dir.mkdir(parents=True)
    save_image_png(img_dir / "a.png",
                   rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8))
    save_label_png(mask_dir / "a.png", np.zeros((10, 10), dtype=np.uint8))
    (rec,) = datasets.load("appletree", tmp_path, "train")
    with pytest.raises(DataError):
        rec.load_gt_mask()


# --- label merging -----------------------------------------------------------


def test_merge_instances_collapses_nonzero_labels():
    labels = np.array([[0, 1, 2], [7, 0, 1]])
    np.testing.assert_array_equal(
        datasets.merge_instances(labels),
        [[False, True, True], [True, False, True]],
    )


def test_merge_instances_matches_membership_oracle(rng):
    for _ in range(20):
        labels = rng.integers(0, 9, size=(15, 12))
        got = datasets.merge_instances(labels)
        np.testing.assert_array_equal(got, nonzero_membership(labels))
        allowed = {1, 2, 3, 4}
        got = datasets.merge_instances(labels, plant_labels=frozenset(allowed))
        np.testing.assert_array_equal(got, nonzero_membership(labels, allowed))


def test_merge_instances_is_idempotent(rng):
    labels = rng.integers(0, 5, size=(10, 10))
    once = datasets.merge_instances(labels)
    twice = datasets.merge_instances(once)
    np.testing.assert_array_equal(once, twice)


def test_merge_instances_rejects_negative_labels():
    with pytest.raises(DataError):
        datasets.merge_instances(np.array([[0, -1], [2, 3]]))


def test_phenobench_class_filter_excludes_nonplant_labels():
    labels = np.array([[0, 1, 2], [3, 4, 5]])
    got = datasets.merge_instances(
        labels, plant_labels=datasets.PHENOBENCH_PLANT_LABELS
    )
    np.testing.assert_array_equal(got, [[False, True, True], [True, True, False]])


# --- verification report -----------------------------------------------------


def test_verify_reports_counts_per_split(tmp_path):
    fixtures.write_mini_dataset("appletree", tmp_path, seed=0)
    report = datasets.verify("appletree", tmp_path)
    assert report["dataset"] == "appletree"
    assert report["splits"]["train"] == {"records": 4, "with_gt": 4}
    assert report["splits"]["val"] == {"records": 3, "with_gt": 3}
    assert report["splits"]["test"] == {"records": 2, "with_gt": 2}


def test_verify_reports_errors_without_raising(tmp_path, rng):
    img_dir = tmp_path / "train" / "images"
    mask_dir = tmp_path / "train" / "masks"
    img_dir.mkdir(parents=True)
    mask_dir.mkdir(parents=True)
    save_image_png(img_dir / "only.png",
                   rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8))
    report = datasets.verify("appletree", tmp_path)
    assert "error" in report["splits"]["train"]
    assert report["splits"]["val"] == {"records": 0, "with_gt": 0}

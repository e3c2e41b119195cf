import json
import shutil

import numpy as np
import pytest

from scenechange.data import (
    LayoutError,
    PairingError,
    load_dataset,
    load_pair,
    read_image,
    read_mask,
    write_image,
    write_mask,
)


def make_tree(root, ids, layout="scd", size=16):
    dirs = ("t0", "t1", "gt") if layout == "scd" else ("query", "reference", "gt_t0", "gt_t1", "gt_inter")
    for d in dirs:
        (root / d).mkdir(parents=True, exist_ok=True)
    for i in ids:
        for d in dirs:
            if d.startswith("gt"):
                write_mask(np.zeros((size, size), bool), root / d / f"{i}.png")
            else:
                write_image(np.full((size, size, 3), 100, np.uint8), root / d / f"{i}.png")
    return root


def test_three_pairs_sorted(tmp_path):
    m = load_dataset(make_tree(tmp_path / "ds", ["c", "a", "b"]), size=16)
    assert [r.id for r in m.records] == ["a", "b", "c"]
    assert len(m) == 3 and m.layout == "scd" and m.name == "ds" and m.resolution == (16, 16)


def test_missing_gt_dir(tmp_path):
    root = make_tree(tmp_path / "ds", ["a"])
    shutil.rmtree(root / "gt")
    with pytest.raises(LayoutError, match="gt/"):
        load_dataset(root)


def test_unknown_layout_and_missing_root(tmp_path):
    with pytest.raises(LayoutError):
        load_dataset(tmp_path, "xview")
    with pytest.raises(LayoutError):
        load_dataset(tmp_path / "nope")


def test_orphans_listed(tmp_path):
    root = make_tree(tmp_path / "ds", ["a", "b"])
    (root / "t1" / "b.png").unlink()
    write_image(np.zeros((4, 4, 3), np.uint8), root / "t1" / "z.png")
    with pytest.raises(PairingError, match="b, z"):
        load_dataset(root)


def test_missing_gt_file(tmp_path):
    root = make_tree(tmp_path / "ds", ["a", "b"])
    (root / "gt" / "b.png").unlink()
    with pytest.raises(PairingError, match="b"):
        load_dataset(root)


def test_empty_tree(tmp_path):
    with pytest.raises(LayoutError):
        load_dataset(make_tree(tmp_path / "ds", []))


def test_changevpr_records_expose_all_masks(changevpr_root, fixture_counts):
    m = load_dataset(changevpr_root, "changevpr")
    assert len(m) == fixture_counts["changevpr_mini"]["pairs"]
    for r in m.records:
        assert r.gt_fwd.endswith(f"gt_t0/{r.id}.png")
        assert r.gt_bwd.endswith(f"gt_t1/{r.id}.png")
        assert r.gt_intersection.endswith(f"gt_inter/{r.id}.png")
        assert r.gt_path("inter") == r.gt_intersection


def test_scd_fixture_count(scd_root, fixture_counts):
    m = load_dataset(scd_root, "scd")
    assert len(m) == fixture_counts["scd_mini"]["pairs"]
    with pytest.raises(PairingError):
        m.records[0].gt_path("bwd")


def test_manifest_deterministic_and_json(changevpr_root):
    a = load_dataset(changevpr_root, "changevpr")
    b = load_dataset(changevpr_root, "changevpr")
    assert a == b and a.to_json() == b.to_json()
    doc = json.loads(a.to_json())
    assert set(doc) == {"name", "split", "layout", "root", "resolution", "records"}
    assert set(doc["records"][0]) == {"id", "path_t0", "path_t1", "gt_fwd", "gt_bwd", "gt_intersection"}


def test_mask_roundtrips(tmp_path):
    checker = (np.indices((12, 12)).sum(axis=0) % 2).astype(bool)
    write_mask(checker, tmp_path / "c.png")
    assert np.array_equal(read_mask(tmp_path / "c.png"), checker)
    write_mask(np.zeros((5, 5), bool), tmp_path / "z.png")
    from PIL import Image

    raw = np.asarray(Image.open(tmp_path / "z.png"))
    assert raw.dtype == np.uint8 and (raw == 0).all()
    m = np.zeros((20, 20), bool)
    m.flat[:40] = True
    write_mask(m, tmp_path / "m.png")
    assert read_mask(tmp_path / "m.png").sum() == 40
    assert set(np.unique(np.asarray(Image.open(tmp_path / "m.png")))) == {0, 255}


def test_read_mask_binarises_at_127(tmp_path):
    from PIL import Image

    Image.fromarray(np.array([[0, 127, 128, 255]], np.uint8)).save(tmp_path / "g.png")
    assert read_mask(tmp_path / "g.png").tolist() == [[False, False, True, True]]


def test_garbled_file(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not a png")
    with pytest.raises(OSError):
        read_mask(bad)
    with pytest.raises(FileNotFoundError):
        read_image(tmp_path / "missing.png")


def test_resize_on_read(tmp_path):
    write_image(np.zeros((10, 20, 3), np.uint8), tmp_path / "i.png")
    assert read_image(tmp_path / "i.png", 32).shape == (32, 32, 3)
    write_mask(np.ones((10, 20), bool), tmp_path / "m.png")
    assert read_mask(tmp_path / "m.png", 32).shape == (32, 32)


def test_load_pair(scd_root):
    m = load_dataset(scd_root)
    p = load_pair(m.records[0], 64)
    assert p.img0.shape == (64, 64, 3) and p.gt.shape == (64, 64) and p.gt.dtype == bool

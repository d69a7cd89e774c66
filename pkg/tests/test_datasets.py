import struct

import numpy as np
import pytest

from senscov.datasets import (Dataset, load_csv, load_idx, render_digits,
                              save_idx, write_digit_dataset)


def test_idx_roundtrip_and_header(tmp_path):
    images, labels = render_digits(50, seed=3)
    img_path, lab_path = tmp_path / "i.idx", tmp_path / "l.idx"
    save_idx(img_path, lab_path, images, labels)

    header = struct.unpack(">IIII", img_path.read_bytes()[:16])
    assert header == (0x00000803, 50, 28, 28)

    ds = load_idx(img_path, lab_path)
    assert len(ds) == 50
    assert ds.inputs[0].shape == (28, 28)
    assert np.array_equal(ds.labels, labels)


def test_pixel_scaling(tmp_path):
    images = np.zeros((1, 2, 2), dtype=np.uint8)
    images[0, 0, 0] = 255
    images[0, 1, 1] = 51
    save_idx(tmp_path / "i.idx", tmp_path / "l.idx", images, np.array([4]))
    ds = load_idx(tmp_path / "i.idx", tmp_path / "l.idx")
    assert ds.inputs[0][0, 0] == 1.0
    assert ds.inputs[0][1, 1] == 0.2


def test_idx_magic_mismatch(tmp_path):
    bad = tmp_path / "bad.idx"
    bad.write_bytes(struct.pack(">IIII", 0x123, 1, 2, 2) + b"\x00" * 4)
    with pytest.raises(ValueError, match="magic"):
        load_idx(bad, bad)


def test_idx_truncation_reports_byte_counts(tmp_path):
    images, labels = render_digits(4, seed=0)
    img_path, lab_path = tmp_path / "i.idx", tmp_path / "l.idx"
    save_idx(img_path, lab_path, images, labels)
    img_path.write_bytes(img_path.read_bytes()[:-10])
    with pytest.raises(ValueError, match="expected 3136 bytes, got 3126"):
        load_idx(img_path, lab_path)


def test_idx_count_mismatch(tmp_path):
    images, labels = render_digits(4, seed=0)
    save_idx(tmp_path / "i.idx", tmp_path / "l4.idx", images, labels)
    save_idx(tmp_path / "i3.idx", tmp_path / "l3.idx", images[:3], labels[:3])
    with pytest.raises(ValueError, match="count mismatch"):
        load_idx(tmp_path / "i.idx", tmp_path / "l3.idx")


def test_csv_loading(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1.0,5.0,7.0,0\n3.0,5.0,9.0,1\n")
    ds = load_csv(path, num_classes=2)
    assert len(ds) == 2
    assert ds.inputs[0].shape == (3,)
    # min-max per column; the constant column scales to 0
    assert np.array_equal(ds.inputs[0], [0.0, 0.0, 0.0])
    assert np.array_equal(ds.inputs[1], [1.0, 0.0, 1.0])


def test_csv_label_out_of_range(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1.0,0\n2.0,5\n")
    with pytest.raises(ValueError, match="label"):
        load_csv(path, num_classes=2)


def test_csv_ragged_row(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1.0,2.0,0\n1.0,1\n")
    with pytest.raises(ValueError, match="ragged"):
        load_csv(path, num_classes=2)


def test_csv_non_numeric(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1.0,spam,0\n")
    with pytest.raises(ValueError, match="non-numeric"):
        load_csv(path, num_classes=2)


def test_dataset_conform_reshapes():
    ds = Dataset([np.zeros((28, 28))], np.array([0]), "test", 10)
    flat = ds.conform((784,))
    assert flat.inputs[0].shape == (784,)
    chan = ds.conform((1, 28, 28))
    assert chan.inputs[0].shape == (1, 28, 28)
    with pytest.raises(ValueError):
        ds.conform((100,))


def test_render_digits_deterministic_and_balancedish():
    a_img, a_lab = render_digits(120, seed=9)
    b_img, b_lab = render_digits(120, seed=9)
    assert np.array_equal(a_img, b_img)
    assert np.array_equal(a_lab, b_lab)
    assert len(np.unique(a_lab)) == 10
    assert a_img.max() <= 90  # low-contrast strokes by design


def test_write_digit_dataset(tmp_path):
    paths = write_digit_dataset(tmp_path, 30, 10, seed=1)
    train = load_idx(*paths["train"], split="train")
    test = load_idx(*paths["test"])
    assert len(train) == 30 and len(test) == 10


def test_dataset_label_validation():
    with pytest.raises(ValueError):
        Dataset([np.zeros(4)], np.array([7]), "test", num_classes=3)

import struct

import numpy as np
import pytest

from advchain.data import (
    DataFormatError,
    Dataset,
    load_mnist_idx,
    make_blobs,
    split,
    write_mnist_idx,
)


def write_fixture_idx(tmp_path, pixels, labels, rows=2, cols=2, tag=""):
    """Hand-build an IDX pair byte by byte."""
    img = tmp_path / f"imgs{tag}.idx"
    lab = tmp_path / f"labs{tag}.idx"
    n = len(labels)
    img.write_bytes(struct.pack(">4I", 0x00000803, n, rows, cols) + bytes(pixels))
    lab.write_bytes(struct.pack(">2I", 0x00000801, n) + bytes(labels))
    return img, lab


def test_idx_fixture_exact_values(tmp_path):
    img, lab = write_fixture_idx(tmp_path, [0, 51, 102, 255, 10, 20, 30, 40], [3, 9])
    data = load_mnist_idx(img, lab)
    assert len(data) == 2 and data.d == 4 and data.n_classes == 10
    np.testing.assert_allclose(data.inputs[0], np.array([0, 51, 102, 255]) / 255.0)
    np.testing.assert_allclose(data.inputs[1], np.array([10, 20, 30, 40]) / 255.0)
    assert data.labels.tolist() == [3, 9]


def test_idx_label_file_with_image_magic_rejected(tmp_path):
    img, _ = write_fixture_idx(tmp_path, [0, 0, 0, 0], [1])
    with pytest.raises(DataFormatError, match="magic"):
        load_mnist_idx(img, img)


def test_idx_truncated_pixels_rejected(tmp_path):
    img, lab = write_fixture_idx(tmp_path, [0, 0, 0, 0], [1])
    img.write_bytes(img.read_bytes()[:-2])
    with pytest.raises(DataFormatError, match="pixel"):
        load_mnist_idx(img, lab)


def test_idx_count_mismatch_rejected(tmp_path):
    img, _ = write_fixture_idx(tmp_path, [0, 0, 0, 0], [1])
    _, lab2 = write_fixture_idx(tmp_path, [0, 0, 0, 0, 0, 0, 0, 0], [1, 2], tag="2")
    with pytest.raises(DataFormatError, match="counts differ"):
        load_mnist_idx(img, lab2)


def test_idx_roundtrip_within_quantization(tmp_path):
    data = make_blobs(10, [np.full(9, 0.3), np.full(9, 0.7)], sigma=0.1, seed=4)
    err = write_mnist_idx(data, tmp_path / "i.idx", tmp_path / "l.idx", side=3)
    assert err <= 1 / 510 + 1e-15
    back = load_mnist_idx(tmp_path / "i.idx", tmp_path / "l.idx")
    assert np.abs(back.inputs - data.inputs).max() <= 1 / 510 + 1e-15
    np.testing.assert_array_equal(back.labels, data.labels)


def test_blobs_sigma_to_zero_collapses_to_centers():
    centers = [np.array([0.2, 0.8]), np.array([0.6, 0.4])]
    data = make_blobs(5, centers, sigma=1e-12, seed=0)
    for label, c in enumerate(centers):
        assert np.abs(data.inputs[data.labels == label] - c).max() < 1e-9


def test_blobs_distant_centers_linearly_separable():
    sigma = 0.03
    centers = [np.array([0.2, 0.2]), np.array([0.2 + 10 * sigma, 0.2 + 10 * sigma])]
    data = make_blobs(100, centers, sigma=sigma, seed=3)
    from advchain.models import Classifier, MlpSpec, TrainConfig, accuracy, sgd_train

    model = Classifier(MlpSpec((2, 2), seed=0))  # linear model
    sgd_train(model, data, TrainConfig(epochs=30, lr=0.5, seed=0))
    assert accuracy(model, data.inputs, data.labels) == 1.0


def test_blobs_deterministic_per_seed():
    centers = [np.array([0.3, 0.3]), np.array([0.7, 0.7])]
    a = make_blobs(20, centers, sigma=0.05, seed=9)
    b = make_blobs(20, centers, sigma=0.05, seed=9)
    assert a.inputs.tobytes() == b.inputs.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()


def test_blobs_rejects_duplicate_centers():
    with pytest.raises(ValueError):
        make_blobs(5, [np.array([0.5, 0.5]), np.array([0.5, 0.5])], sigma=0.1, seed=0)


def test_blobs_inputs_always_in_unit_box():
    data = make_blobs(200, [np.array([0.05, 0.95]), np.array([0.9, 0.1])], sigma=0.4, seed=2)
    assert data.inputs.min() >= 0.0 and data.inputs.max() <= 1.0


def test_split_half():
    data = make_blobs(5, [np.array([0.3, 0.3]), np.array([0.7, 0.7])], sigma=0.05, seed=1)
    a, b = split(data, 0.5, seed=0)
    assert len(a) == 5 and len(b) == 5


def test_split_union_is_original_multiset():
    data = make_blobs(10, [np.array([0.3, 0.3]), np.array([0.7, 0.7])], sigma=0.05, seed=1)
    a, b = split(data, 0.3, seed=5)
    merged = np.concatenate([a.inputs, b.inputs])
    assert sorted(map(tuple, merged)) == sorted(map(tuple, data.inputs))


def test_split_seeded_reproducibility():
    data = make_blobs(10, [np.array([0.3, 0.3]), np.array([0.7, 0.7])], sigma=0.05, seed=1)
    a1, _ = split(data, 0.4, seed=8)
    a2, _ = split(data, 0.4, seed=8)
    assert a1.inputs.tobytes() == a2.inputs.tobytes()


def test_dataset_rejects_out_of_range_inputs():
    with pytest.raises(ValueError):
        Dataset("bad", np.array([[1.5, 0.0]]), np.array([0]), 2)
    with pytest.raises(ValueError):
        Dataset("bad", np.array([[0.5, 0.0]]), np.array([5]), 2)

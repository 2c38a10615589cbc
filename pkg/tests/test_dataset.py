import gzip
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hwl4f.dataset import (DataConfigError, IdxFormatError, IdxLengthError, encode_idx,
                           load_mnist, parse_idx, read_idx_file, subsample,
                           synthetic_corpus)


def test_parse_labels_example():
    buf = bytes([0, 0, 8, 1, 0, 0, 0, 3, 7, 2, 9])
    np.testing.assert_array_equal(parse_idx(buf, "labels"), [7, 2, 9])


def test_parse_images():
    pixels = np.arange(2 * 28 * 28, dtype=np.uint64) % 256
    buf = struct.pack(">IIII", 0x803, 2, 28, 28) + pixels.astype(np.uint8).tobytes()
    out = parse_idx(buf, "images")
    assert out.shape == (2, 28, 28)
    assert out[1, 0, 0] == 784 % 256


def test_bad_magic():
    buf = struct.pack(">IIII", 0x802, 0, 28, 28)
    with pytest.raises(IdxFormatError):
        parse_idx(buf, "images")
    with pytest.raises(IdxFormatError):
        parse_idx(bytes([0, 0, 8, 3, 0, 0, 0, 0]), "labels")


def test_count_zero():
    assert parse_idx(struct.pack(">II", 0x801, 0), "labels").shape == (0,)
    assert parse_idx(struct.pack(">IIII", 0x803, 0, 28, 28), "images").shape == (0, 28, 28)


def test_truncated():
    with pytest.raises(IdxLengthError):
        parse_idx(bytes([0, 0, 8, 1, 0, 0, 0, 3, 7, 2]), "labels")
    with pytest.raises(IdxLengthError):
        parse_idx(bytes([0, 0, 8, 3, 0, 0]), "images")


@given(st.lists(st.integers(0, 255), max_size=50))
def test_round_trip_labels(values):
    arr = np.array(values, dtype=np.uint8)
    buf = encode_idx(arr)
    assert encode_idx(parse_idx(buf, "labels")) == buf


def test_gzip_and_scaling(tmp_path):
    imgs = np.zeros((3, 28, 28), np.uint8)
    imgs[0, 0, 0] = 255
    (tmp_path / "i.gz").write_bytes(gzip.compress(encode_idx(imgs)))
    (tmp_path / "l").write_bytes(encode_idx(np.array([1, 2, 3], np.uint8)))
    x, y = load_mnist(tmp_path / "i.gz", tmp_path / "l")
    assert x.max() == 1.0 and x.min() == 0.0
    np.testing.assert_array_equal(y, [1, 2, 3])
    np.testing.assert_array_equal(read_idx_file(tmp_path / "l", "labels"), [1, 2, 3])


def test_count_mismatch(tmp_path):
    (tmp_path / "i").write_bytes(encode_idx(np.zeros((2, 28, 28), np.uint8)))
    (tmp_path / "l").write_bytes(encode_idx(np.zeros(3, np.uint8)))
    with pytest.raises(DataConfigError):
        load_mnist(tmp_path / "i", tmp_path / "l")


def test_mnist_range(mnist):
    x, y = mnist
    assert x.min() >= 0 and x.max() <= 1
    assert set(np.unique(y)) == set(range(10))


def test_stratified_histograms(mnist_split):
    np.testing.assert_array_equal(np.bincount(mnist_split.train_y, minlength=10), [60] * 10)
    np.testing.assert_array_equal(np.bincount(mnist_split.test_y, minlength=10), [10] * 10)


def test_split_determinism_and_disjointness(mnist):
    x, y = mnist
    a, b = subsample(x, y, seed=3), subsample(x, y, seed=3)
    np.testing.assert_array_equal(a.train_idx, b.train_idx)
    assert a.digest() == b.digest()
    assert a.digest() != subsample(x, y, seed=4).digest()
    for seed in range(10):
        s = subsample(x, y, seed=seed)
        assert not set(s.train_idx) & set(s.test_idx)
        assert len(set(s.train_idx)) == 600 and len(set(s.test_idx)) == 100


def test_insufficient_class():
    x = np.zeros((200, 4, 4))
    y = np.zeros(200, int)
    y[:150] = np.arange(150) % 9  # class 9 never appears
    with pytest.raises(DataConfigError):
        subsample(x, y, train_n=60, test_n=10)
    with pytest.raises(DataConfigError):
        subsample(x[:10], y[:10], train_n=60, test_n=10)


def test_synthetic_deterministic():
    a, la = synthetic_corpus(30, seed=1)
    b, lb = synthetic_corpus(30, seed=1)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(la, lb)
    assert not np.array_equal(a, synthetic_corpus(30, seed=2)[0])
    assert a.shape == (30, 28, 28) and a.min() >= 0 and a.max() <= 1


def test_synthetic_labels_cover_classes():
    _, y = synthetic_corpus(50, seed=0)
    np.testing.assert_array_equal(np.bincount(y), [5] * 10)
    with pytest.raises(DataConfigError):
        synthetic_corpus(0, seed=0)


def test_synthetic_bp_learns():
    from hwl4f.model import Hyperparams, SoftwareBackend, init_params
    from hwl4f.optics import RngStream
    from hwl4f.trainers import AlgoConfig, evaluate, new_train_state, train_epoch
    x, y = synthetic_corpus(1000, seed=12345)
    split = subsample(x, y, 600, 100, seed=0)
    hp = Hyperparams(epochs=20)
    algo = AlgoConfig(algorithm="bp")
    root = RngStream(0)
    st_ = new_train_state(init_params(28, hp, root.spawn(0)), algo, root.spawn(1))
    for _ in range(hp.epochs):
        train_epoch(st_, split.train_x, split.train_y, algo, SoftwareBackend(), hp, root.spawn(3))
    assert evaluate(st_.params, split.test_x, split.test_y, SoftwareBackend()) > 0.8

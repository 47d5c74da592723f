"""Tests for synthetic generation, the CIFAR-10 binary reader and stratified splits."""

import numpy as np
import pytest

from src.data import (
    LabeledDataset,
    allocate,
    gen_blobs,
    gen_synthetic,
    load_cifar10_binary,
    load_splits,
    save_splits,
    split_dataset,
    validate_fractions,
)
from src.data.cifar import RECORD_BYTES
from src.exceptions import ClassIndexError, ConfigError, CorruptRecordError, DataError, FormatError, ResolutionError


def _cifar_records(labels, fill=None):
    records = np.zeros((len(labels), RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = labels
    if fill is not None:
        records[:, 1:] = fill
    return records.tobytes()


class TestSynthetic:

    def test_deterministic_for_seed(self):
        a = gen_synthetic(3, 5, image_size=8, seed=11)
        b = gen_synthetic(3, 5, image_size=8, seed=11)
        np.testing.assert_array_equal(a.samples, b.samples)
        c = gen_synthetic(3, 5, image_size=8, seed=12)
        assert not np.array_equal(a.samples, c.samples)

    def test_shape_counts_and_range(self):
        ds = gen_synthetic(4, 6, image_size=8, channels=2, seed=0)
        assert ds.sample_shape == (2, 8, 8)
        assert ds.class_counts().tolist() == [6, 6, 6, 6]
        assert ds.labels.tolist() == sorted(ds.labels.tolist())
        assert ds.samples.min() >= 0.0 and ds.samples.max() <= 1.0

    @pytest.mark.parametrize("kwargs", [
        {"classes": 1, "per_class": 5},
        {"classes": 3, "per_class": 0},
        {"classes": 3, "per_class": 5, "separation": 0.0},
        {"classes": 3, "per_class": 5, "image_size": 3},
        {"classes": 3, "per_class": 5, "channels": 0},
    ])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ConfigError):
            gen_synthetic(**kwargs)

    def test_blobs(self):
        ds = gen_blobs(3, 10, dim=5, seed=1)
        assert ds.samples.shape == (30, 5)
        assert ds.class_counts().tolist() == [10, 10, 10]


class TestCifarBinary:

    def test_reads_records(self, tmp_path):
        path = tmp_path / "data_batch_1.bin"
        path.write_bytes(_cifar_records([3, 0, 9], fill=255))
        ds = load_cifar10_binary(path)
        assert len(ds) == 3
        assert ds.sample_shape == (3, 32, 32)
        assert ds.labels.tolist() == [3, 0, 9]
        assert ds.samples.max() == 1.0
        assert ds.num_classes == 10

    def test_channel_planes(self, tmp_path):
        records = np.zeros((1, RECORD_BYTES), dtype=np.uint8)
        records[0, 1:1 + 1024] = 255  # red plane only
        path = tmp_path / "one.bin"
        path.write_bytes(records.tobytes())
        ds = load_cifar10_binary(path)
        assert ds.samples[0, 0].min() == 1.0
        assert ds.samples[0, 1:].max() == 0.0

    def test_class_subset_renumbers(self, tmp_path):
        path = tmp_path / "data_batch_1.bin"
        path.write_bytes(_cifar_records([5, 1, 5, 2]))
        ds = load_cifar10_binary(path, class_subset=[5, 1])
        assert ds.labels.tolist() == [0, 1, 0]
        assert ds.num_classes == 2

    def test_directory_of_batches(self, tmp_path):
        (tmp_path / "data_batch_1.bin").write_bytes(_cifar_records([1]))
        (tmp_path / "data_batch_2.bin").write_bytes(_cifar_records([2]))
        (tmp_path / "test_batch.bin").write_bytes(_cifar_records([3]))
        assert load_cifar10_binary(tmp_path).labels.tolist() == [1, 2, 3]

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(_cifar_records([1, 2])[:-5])
        with pytest.raises(FormatError):
            load_cifar10_binary(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        with pytest.raises(FormatError):
            load_cifar10_binary(path)

    def test_bad_label(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(_cifar_records([1, 12]))
        with pytest.raises(CorruptRecordError) as info:
            load_cifar10_binary(path)
        assert info.value.details["record"] == 1

    def test_missing_path(self, tmp_path):
        with pytest.raises(ResolutionError):
            load_cifar10_binary(tmp_path / "nope.bin")


class TestSplits:

    @pytest.fixture
    def forty(self):
        return gen_synthetic(4, 10, image_size=4, seed=2)

    def test_equal_fractions(self, forty):
        splits = split_dataset(forty, (0.25, 0.25, 0.25, 0.25), seed=3)
        assert [len(splits[name]) for name in ("train", "val", "calib", "test")] == [10, 10, 10, 10]
        for part in splits.values():
            counts = part.class_counts()
            assert counts.max() - counts.min() <= 1

    def test_disjoint_and_complete(self, forty):
        splits = split_dataset(forty, (0.25, 0.25, 0.25, 0.25), seed=3)
        indices = np.concatenate([part.indices for part in splits.values()])
        assert sorted(indices.tolist()) == list(range(40))

    def test_deterministic(self, forty):
        a = split_dataset(forty, seed=9)
        b = split_dataset(forty, seed=9)
        for name in a:
            np.testing.assert_array_equal(a[name].indices, b[name].indices)

    def test_split_names_recorded(self, forty):
        splits = split_dataset(forty, seed=0)
        assert {name: part.split for name, part in splits.items()} == {
            "train": "train", "val": "val", "calib": "calib", "test": "test"}

    @pytest.mark.parametrize("fractions", [(0.5, 0.5, 0.5, 0.5), (0.5, 0.5), (1.0, 0.0, 0.0, 0.0)])
    def test_bad_fractions(self, fractions):
        with pytest.raises(ConfigError):
            validate_fractions(fractions)

    def test_largest_remainder(self):
        assert allocate(10, (0.6, 0.15, 0.1, 0.15)) == [6, 2, 1, 1]
        assert sum(allocate(101, (0.6, 0.15, 0.1, 0.15))) == 101

    def test_persistence(self, forty, tmp_path):
        splits = split_dataset(forty, seed=1)
        path = save_splits(splits, tmp_path / "splits.ucan")
        restored = load_splits(path)
        assert list(restored) == ["train", "val", "calib", "test"]
        np.testing.assert_array_equal(restored["test"].indices, splits["test"].indices)
        np.testing.assert_array_equal(restored["test"].labels, splits["test"].labels)


class TestLabeledDataset:

    def test_label_range(self):
        with pytest.raises(ClassIndexError):
            LabeledDataset(np.zeros((2, 3)), [0, 3], num_classes=3)

    def test_require_nonempty(self):
        empty = LabeledDataset(np.zeros((0, 3)), [], num_classes=2)
        with pytest.raises(DataError):
            empty.require_nonempty()

    def test_batches_in_order(self):
        ds = LabeledDataset(np.arange(5.0).reshape(5, 1), [0, 1, 0, 1, 0], num_classes=2)
        sizes = [x.shape[0] for x, _ in ds.batches(2)]
        assert sizes == [2, 2, 1]

import struct

import numpy as np
import pytest

from psfedgan.data import (
    GLYPH_AMPLITUDE, LabeledDataset, SETUP1_CLASSES, SplitSpec, glyph_template, load_idx, make_gaussian_mixture,
    make_glyphs, mixture_centers, partition, take_cloud_fraction,
)
from psfedgan.errors import ConfigurationError, DataError
from psfedgan.nnkernel import Rng


def test_gaussian_mixture_balanced():
    ds = make_gaussian_mixture(3, 100, 0.05, Rng(0))
    assert len(ds) == 300
    assert np.array_equal(np.bincount(ds.labels), [100, 100, 100])


def test_gaussian_mixture_zero_spread_on_centers():
    ds = make_gaussian_mixture(4, 10, 0.0, Rng(0))
    assert np.array_equal(ds.samples, mixture_centers(4)[ds.labels])


def test_gaussian_mixture_means():
    ds = make_gaussian_mixture(3, 1000, 0.1, Rng(1))
    centers = mixture_centers(3)
    for c in range(3):
        assert np.abs(ds.samples[ds.labels == c].mean(axis=0) - centers[c]).max() <= 0.05


def test_glyphs_shape_and_range():
    ds = make_glyphs(10, 5, Rng(0), noise=0.0)
    assert ds.samples.shape == (50, 64)
    assert ds.samples.min() >= -1 and ds.samples.max() <= 1
    expected = (glyph_template(3).ravel() * 2 - 1) * GLYPH_AMPLITUDE
    assert np.allclose(ds.samples[ds.labels == 3][0], expected)
    with pytest.raises(ConfigurationError):
        make_glyphs(11, 1, Rng(0))


def test_dataset_validation():
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((3, 2)), np.zeros(2), 2)
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 2)), np.array([0, 5]), 2)


def test_split1_one_class_per_user_covering_all():
    ds = make_gaussian_mixture(10, 50, 0.05, Rng(0))
    shards = partition(ds, SplitSpec("split1", 10))
    assert all(len(s.classes) == 1 for s in shards)
    assert sorted(c for s in shards for c in s.classes) == list(range(10))


@pytest.mark.parametrize("kind,k", [("split2", 2), ("split3", 3)])
def test_split2_split3_shard_counts(kind, k):
    ds = make_gaussian_mixture(10, 60, 0.05, Rng(0))
    shards = partition(ds, SplitSpec(kind, 10))
    assert all(1 <= len(s.classes) <= k for s in shards)
    assert sum(len(s) for s in shards) == len(ds)


def test_split_incompatible_class_count():
    ds = make_gaussian_mixture(3, 10, 0.05, Rng(0))
    with pytest.raises(ConfigurationError):
        partition(ds, SplitSpec("split1", 10))


def test_setup1_classes():
    ds = make_gaussian_mixture(10, 20, 0.05, Rng(0))
    shards = partition(ds, SplitSpec("setup1"))
    assert [tuple(s.classes) for s in shards] == list(SETUP1_CLASSES)


def test_custom_split_shares_classes():
    ds = make_gaussian_mixture(3, 20, 0.05, Rng(0))
    shards = partition(ds, SplitSpec("custom", assignment=((0, 1), (1, 2))))
    assert len(shards) == 2
    assert np.sum(shards[0].labels == 1) == 10 and np.sum(shards[1].labels == 1) == 10


def test_disjoint_partition_with_cloud():
    ds = make_gaussian_mixture(10, 100, 0.05, Rng(0))
    cloud, rest = take_cloud_fraction(ds, 0.05, Rng(1))
    shards = partition(rest, SplitSpec("split2", 10), Rng(2))
    # subsets keep positions in the original dataset
    seen = np.concatenate([cloud.index] + [s.index for s in shards])
    assert sorted(seen.tolist()) == list(range(len(ds)))


def test_cloud_fraction_examples():
    ds = make_gaussian_mixture(10, 1000, 0.05, Rng(0))
    cloud, rest = take_cloud_fraction(ds, 0.01, Rng(1))
    assert len(cloud) == 100 and np.array_equal(np.bincount(cloud.labels), [10] * 10)
    assert len(set(cloud.index) | set(rest.index)) == len(ds)
    assert not set(cloud.index) & set(rest.index)
    full, empty = take_cloud_fraction(ds, 1.0, Rng(1))
    assert len(full) == len(ds) and len(empty) == 0
    with pytest.raises(ConfigurationError):
        take_cloud_fraction(ds, 0.0, Rng(1))


def _write_idx(path, magic, dims, payload):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + bytes(payload))


def test_load_idx_affine_map(tmp_path):
    img, lab = tmp_path / "img", tmp_path / "lab"
    _write_idx(img, 0x803, (2, 2, 2), [0, 255, 0, 255, 255, 0, 255, 0])
    _write_idx(lab, 0x801, (2,), [3, 7])
    ds = load_idx(img, lab)
    assert ds.samples.shape == (2, 4)
    assert ds.samples[0, 0] == -1.0 and ds.samples[0, 1] == 1.0
    assert ds.labels.tolist() == [3, 7]


def test_load_idx_errors(tmp_path):
    img, lab = tmp_path / "img", tmp_path / "lab"
    _write_idx(img, 0x802, (1, 1, 1), [0])
    _write_idx(lab, 0x801, (1,), [0])
    with pytest.raises(DataError, match="magic"):
        load_idx(img, lab)
    _write_idx(img, 0x803, (4, 2, 2), [0] * 5)
    with pytest.raises(DataError) as err:
        load_idx(img, lab)
    assert err.value.offset == 21
    _write_idx(img, 0x803, (2, 1, 1), [0, 0])
    with pytest.raises(DataError, match="labels"):
        load_idx(img, lab)


def test_to_csv(tmp_path):
    ds = make_gaussian_mixture(2, 2, 0.0, Rng(0))
    ds.to_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "label,x0,x1" and len(lines) == 5

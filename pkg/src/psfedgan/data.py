"""Toy datasets, the IDX loader, cloud withholding, and non-IID partitioning."""

from dataclasses import dataclass, field
import math
import struct

import numpy as np

from .errors import ConfigurationError, DataError


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    samples: np.ndarray
    labels: np.ndarray
    class_count: int
    # positions in the dataset this one was carved from (identity when not a subset)
    index: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        if samples.ndim == 1:
            samples = samples.reshape(-1, 1)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64).reshape(-1)
        if samples.shape[0] != labels.shape[0]:
            raise DataError(f"{samples.shape[0]} samples but {labels.shape[0]} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise DataError(f"label outside [0, {self.class_count})")
        index = np.arange(labels.size) if self.index is None else np.asarray(self.index, dtype=np.int64)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "index", index)

    def __len__(self):
        return self.labels.size

    @property
    def data_dim(self):
        return self.samples.shape[1]

    @property
    def classes(self):
        return sorted(set(self.labels.tolist()))

    def subset(self, positions):
        positions = np.asarray(positions, dtype=np.int64)
        return LabeledDataset(self.samples[positions], self.labels[positions], self.class_count,
                              self.index[positions])

    def concat(self, other):
        return LabeledDataset(np.concatenate([self.samples, other.samples]),
                              np.concatenate([self.labels, other.labels]),
                              max(self.class_count, other.class_count),
                              np.concatenate([self.index, other.index]))

    def to_csv(self, path):
        header = ",".join(["label"] + [f"x{i}" for i in range(self.data_dim)])
        rows = np.column_stack([self.labels.astype(np.float64), self.samples.astype(np.float64)])
        np.savetxt(path, rows, delimiter=",", header=header, comments="",
                   fmt=["%d"] + ["%.9g"] * self.data_dim)


def make_gaussian_mixture(classes, per_class, spread, rng):
    """Class ``c`` centred at angle ``2*pi*c/classes`` on the unit circle.

    Samples are generated class by class (x noise then y noise per sample) and
    clipped to ``[-1, 1]``.
    """
    if classes < 2:
        raise ConfigurationError("need at least two classes")
    centers = mixture_centers(classes)
    labels = np.repeat(np.arange(classes), per_class)
    noise = rng.normal((classes * per_class, 2)) if spread else np.zeros((classes * per_class, 2), np.float32)
    samples = centers[labels] + np.float32(spread) * noise
    return LabeledDataset(np.clip(samples, -1.0, 1.0), labels, classes)


def mixture_centers(classes):
    angles = 2.0 * math.pi * np.arange(classes) / classes
    return np.stack([np.cos(angles), np.sin(angles)], axis=1).astype(np.float32)


# 5x7 bitmaps for the digits 0-9, one string per row.
_GLYPHS = {
    0: ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    1: ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    2: ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    3: ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    4: ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    5: ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    6: ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    7: ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    8: ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    9: ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
}


def glyph_template(digit):
    """8x8 float image in [0, 1] with the digit's bitmap at offset (0, 1)."""
    img = np.zeros((8, 8), dtype=np.float32)
    for r, row in enumerate(_GLYPHS[digit]):
        img[r, 1:6] = [float(ch) for ch in row]
    return img


GLYPH_AMPLITUDE = 0.8


def make_glyphs(classes, per_class, rng, noise=0.1, max_shift=0):
    """Procedural 8x8 digit images in ``[-1, 1]``, flattened row-major.

    Each sample is the class template at ``+-GLYPH_AMPLITUDE`` shifted by up to
    ``max_shift`` pixels (horizontal, then vertical draw), plus Gaussian pixel
    noise. The amplitude keeps pixels off the clip bounds, which a tanh
    generator could never reach exactly.
    """
    if not 2 <= classes <= 10:
        raise ConfigurationError("glyph datasets support 2 to 10 classes")
    labels = np.repeat(np.arange(classes), per_class)
    samples = np.empty((labels.size, 64), dtype=np.float32)
    span = 2 * max_shift + 1
    for i, c in enumerate(labels):
        dx = rng.integers(span) - max_shift
        dy = rng.integers(span) - max_shift
        img = np.roll(np.roll(glyph_template(int(c)), dy, axis=0), dx, axis=1)
        img = (img * 2.0 - 1.0) * np.float32(GLYPH_AMPLITUDE) + np.float32(noise) * rng.normal((8, 8))
        samples[i] = np.clip(img, -1.0, 1.0).ravel()
    return LabeledDataset(samples, labels, classes)


def load_idx(images_path, labels_path):
    """Read an IDX image/label pair; pixels map affinely from [0, 255] to [-1, 1]."""
    images, shape = _read_idx(images_path, 0x00000803)
    labels, _ = _read_idx(labels_path, 0x00000801)
    n = shape[0]
    if labels.size != n:
        raise DataError(f"{n} images but {labels.size} labels")
    samples = images.reshape(n, -1).astype(np.float32) / np.float32(127.5) - np.float32(1.0)
    labels = labels.astype(np.int64)
    return LabeledDataset(samples, labels, int(labels.max()) + 1 if n else 1)


def _read_idx(path, magic):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataError("truncated IDX header", 0)
    (found,) = struct.unpack_from(">I", raw, 0)
    if found != magic:
        raise DataError(f"bad IDX magic {found:#010x}, expected {magic:#010x}", 0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataError("truncated IDX dimensions", len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) < header + count:
        raise DataError(f"truncated IDX payload: need {count} bytes", len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims), dims


def take_cloud_fraction(ds, fraction, rng):
    """Stratified withhold of ``ceil(fraction * n_c)`` samples per class.

    Classes are visited in ascending order, each with its own seeded
    permutation. Returns ``(cloud, rest)``.
    """
    if not 0 < fraction <= 1:
        raise ConfigurationError("cloud fraction must lie in (0, 1]")
    cloud_pos, rest_pos = [], []
    for c in range(ds.class_count):
        pos = np.flatnonzero(ds.labels == c)
        if pos.size == 0:
            continue
        k = min(pos.size, math.ceil(fraction * pos.size - 1e-9))
        perm = pos[rng.permutation(pos.size)]
        cloud_pos.append(np.sort(perm[:k]))
        rest_pos.append(np.sort(perm[k:]))
    cloud = np.sort(np.concatenate(cloud_pos)) if cloud_pos else np.zeros(0, np.int64)
    rest = np.sort(np.concatenate(rest_pos)) if rest_pos else np.zeros(0, np.int64)
    return ds.subset(cloud), ds.subset(rest)


SETUP1_CLASSES = ((0, 1), (2, 3, 4), (5, 6, 7, 8, 9))
_SHARDS_PER_USER = {"split1": 1, "split2": 2, "split3": 3}


@dataclass(frozen=True)
class SplitSpec:
    """How user shards are formed.

    ``split1/2/3``: ``num_users * k`` single-class shards (shard ``j`` holds
    class ``j % classes``), handed out by a seeded permutation, ``k`` per user.
    ``setup1``: three users holding classes {0,1}, {2,3,4}, {5..9}.
    ``custom``: ``assignment`` lists the classes of each user; a class claimed
    by several users is split evenly between them.
    """

    kind: str
    num_users: int = 10
    assignment: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("split1", "split2", "split3", "setup1", "custom"):
            raise ConfigurationError(f"unknown split kind {self.kind!r}")
        if self.kind == "setup1":
            object.__setattr__(self, "num_users", 3)
            object.__setattr__(self, "assignment", SETUP1_CLASSES)
        elif self.kind == "custom":
            object.__setattr__(self, "assignment", tuple(tuple(a) for a in self.assignment))
            object.__setattr__(self, "num_users", len(self.assignment))
        if self.num_users <= 0:
            raise ConfigurationError("need at least one user")

    @property
    def shards_per_user(self):
        return _SHARDS_PER_USER.get(self.kind, 1)


def partition(ds, spec, rng=None):
    """Split ``ds`` into one single-class-sharded dataset per user."""
    from .nnkernel import Rng

    rng = Rng(spec.seed) if rng is None else rng
    by_class = {c: np.flatnonzero(ds.labels == c) for c in range(ds.class_count)}

    if spec.kind in _SHARDS_PER_USER:
        n_shards = spec.num_users * spec.shards_per_user
        if n_shards % ds.class_count:
            raise ConfigurationError(
                f"{n_shards} shards cannot be spread evenly over {ds.class_count} classes")
        per_class = n_shards // ds.class_count
        shards = [None] * n_shards
        for c in range(ds.class_count):
            pos = by_class[c][rng.permutation(by_class[c].size)]
            for k, chunk in enumerate(np.array_split(pos, per_class)):
                shards[c + k * ds.class_count] = chunk
        order = rng.permutation(n_shards)
        k = spec.shards_per_user
        user_pos = [np.concatenate([shards[j] for j in order[u * k:(u + 1) * k]])
                    for u in range(spec.num_users)]
    else:
        assignment = spec.assignment
        wanted = [c for classes in assignment for c in classes]
        if any(c >= ds.class_count or c < 0 for c in wanted):
            raise ConfigurationError("split assigns a class the dataset does not have")
        claims = {c: [u for u, classes in enumerate(assignment) if c in classes] for c in set(wanted)}
        user_pos = [[] for _ in assignment]
        for c in sorted(claims):
            pos = by_class[c][rng.permutation(by_class[c].size)]
            for u, chunk in zip(claims[c], np.array_split(pos, len(claims[c]))):
                user_pos[u].append(chunk)
        user_pos = [np.concatenate(p) if p else np.zeros(0, np.int64) for p in user_pos]

    return [ds.subset(np.sort(p)) for p in user_pos]

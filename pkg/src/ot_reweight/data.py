"""Synthetic long-tailed Gaussian datasets, meta-set splitting, CSV I/O.

All randomness flows through numpy Philox (counter-based) generators so that
a given spec + seed reproduces the dataset bitwise.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

__all__ = ["Dataset", "LongTailSpec", "make_longtailed_gaussians",
           "longtail_class_sizes", "split_meta", "save_dataset",
           "load_dataset", "make_rng"]


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed) + (np.uint64(stream) << np.uint64(32))))


@dataclass
class Dataset:
    features: np.ndarray   # (N, D)
    labels: np.ndarray     # (N,) int class ids
    num_classes: int
    split_tag: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on N")
        if self.labels.size and self.labels.max() >= self.num_classes:
            raise ValueError("label id >= num_classes")

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass
class LongTailSpec:
    num_classes: int = 10
    n_head: int = 100
    imbalance_factor: float = 100.0
    dim: int = 16
    class_separation: float = 3.0
    test_per_class: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.imbalance_factor < 1:
            raise ValueError("imbalance_factor must be >= 1")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if min(longtail_class_sizes(self.num_classes, self.n_head,
                                    self.imbalance_factor)) < 1:
            raise ValueError("imbalance_factor too large: smallest class < 1")


def longtail_class_sizes(num_classes: int, n_head: int, imbalance_factor: float):
    """Exponential profile n_k = round(n_head * IF^(-k/(K-1)))."""
    k = np.arange(num_classes)
    raw = n_head * imbalance_factor ** (-k / (num_classes - 1))
    return [int(np.floor(x + 0.5)) for x in raw]


def _class_means(spec: LongTailSpec) -> np.ndarray:
    """Means on a ring in the first two dims, pairwise-adjacent distance
    equal to class_separation; remaining dims zero."""
    K = spec.num_classes
    radius = spec.class_separation / (2.0 * np.sin(np.pi / K))
    angles = 2.0 * np.pi * np.arange(K) / K
    means = np.zeros((K, spec.dim))
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


def make_longtailed_gaussians(spec: LongTailSpec):
    """Returns (train, test); train long-tailed, test balanced."""
    means = _class_means(spec)
    sizes = longtail_class_sizes(spec.num_classes, spec.n_head,
                                 spec.imbalance_factor)
    rng = make_rng(spec.seed)

    def sample_split(counts, tag):
        feats, labs = [], []
        for k, n_k in enumerate(counts):
            feats.append(means[k] + rng.standard_normal((n_k, spec.dim)))
            labs.append(np.full(n_k, k, dtype=np.int64))
        return Dataset(np.vstack(feats), np.concatenate(labs),
                       spec.num_classes, tag)

    train = sample_split(sizes, "train")
    test = sample_split([spec.test_per_class] * spec.num_classes, "test")
    return train, test


def split_meta(train: Dataset, per_class: int, rng: np.random.Generator):
    """Carve a balanced meta set out of train; returns (train', meta).

    If some class cannot spare per_class examples, the per-class count drops
    to min_count - 1 for every class so the meta set stays balanced.
    """
    counts = train.class_counts
    if np.any(counts == 0):
        empty = int(np.argmin(counts))
        raise ValueError(f"class {empty} has no training examples")
    if per_class == 0:
        meta = Dataset(np.empty((0, train.dim)), np.empty(0, dtype=np.int64),
                       train.num_classes, "meta")
        return train, meta

    effective = min(per_class, int(counts.min()) - 1)
    if effective < per_class:
        warnings.warn(
            f"meta per-class reduced from {per_class} to {effective} to keep "
            "the meta set balanced", UserWarning,
        )
    if effective < 1:
        raise ValueError("smallest class too small to spare a meta example")

    meta_idx = []
    for k in range(train.num_classes):
        idx_k = np.flatnonzero(train.labels == k)
        meta_idx.append(rng.choice(idx_k, size=effective, replace=False))
    meta_idx = np.sort(np.concatenate(meta_idx))
    keep = np.setdiff1d(np.arange(train.n), meta_idx)

    meta = Dataset(train.features[meta_idx], train.labels[meta_idx],
                   train.num_classes, "meta")
    rest = Dataset(train.features[keep], train.labels[keep],
                   train.num_classes, train.split_tag)
    return rest, meta


def save_dataset(ds: Dataset, path):
    """CSV with header label,f0,...,f{D-1}; %.17g floats round-trip exactly."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(ds.dim)])
        for y, row in zip(ds.labels, ds.features):
            writer.writerow([int(y)] + [f"{v:.17g}" for v in row])


def load_dataset(path, num_classes: int | None = None,
                 split_tag: str = "train") -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: no rows") from None
        dim = len(header) - 1
        expected = ["label"] + [f"f{i}" for i in range(dim)]
        if header != expected:
            raise ValueError(f"{path}: header mismatch at line 1")
        labels, feats = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dim + 1:
                raise ValueError(f"{path}: malformed row at line {lineno}")
            try:
                labels.append(int(row[0]))
                feats.append([float(v) for v in row[1:]])
            except ValueError:
                raise ValueError(f"{path}: malformed row at line {lineno}") from None
    if not labels:
        raise ValueError(f"{path}: no rows")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0:
        raise ValueError(f"{path}: negative label")
    K = num_classes if num_classes is not None else int(labels.max()) + 1
    if labels.max() >= K:
        raise ValueError(f"{path}: label {labels.max()} >= num_classes {K}")
    return Dataset(np.asarray(feats), labels, K, split_tag)


def save_manifest(spec: LongTailSpec, meta_per_class: int, path):
    doc = asdict(spec)
    doc["meta_per_class"] = meta_per_class
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")

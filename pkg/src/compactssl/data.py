"""Containers for labelled examples and unlabelled pools."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class LabelledData:
    """Images ``[N, C, H, W]`` in [0, 1] with integer class ids.

    ``targets`` optionally holds soft label rows ``[N, K]``; when present
    they replace the one-hot targets during training.
    """

    images: np.ndarray
    labels: np.ndarray
    class_names: tuple
    ids: tuple = ()
    targets: np.ndarray | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = tuple(self.class_names)
        if not self.ids:
            self.ids = tuple(f"item{i:05d}" for i in range(len(self.labels)))
        self.ids = tuple(self.ids)
        if self.images.ndim != 4:
            raise DataError(f"images must be [N, C, H, W], got {self.images.shape}")
        if not (len(self.images) == len(self.labels) == len(self.ids)):
            raise DataError("images, labels and ids differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DataError("label outside the declared class set")

    def __len__(self):
        return len(self.labels)

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return LabelledData(
            self.images[idx],
            self.labels[idx],
            self.class_names,
            tuple(self.ids[i] for i in idx),
            None if self.targets is None else self.targets[idx],
        )

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)

    def digest_bytes(self):
        return self.images.tobytes() + self.labels.tobytes()


def concat(a, b):
    """Union of two labelled sets (soft targets kept only if both carry them)."""
    if a.class_names != b.class_names:
        raise DataError("cannot concatenate datasets with different class sets")
    targets = None
    if a.targets is not None and b.targets is not None:
        targets = np.concatenate([a.targets, b.targets])
    return LabelledData(
        np.concatenate([a.images, b.images]),
        np.concatenate([a.labels, b.labels]),
        a.class_names,
        a.ids + b.ids,
        targets,
    )


@dataclass
class UnlabelledPool:
    """Images without labels. Nothing on this type exposes ground truth."""

    images: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        if self.images.ndim != 4:
            raise DataError(f"images must be [N, C, H, W], got {self.images.shape}")
        if not self.ids:
            self.ids = tuple(f"u{i:05d}" for i in range(len(self.images)))
        self.ids = tuple(self.ids)
        if len(self.ids) != len(self.images):
            raise DataError("images and ids differ in length")

    def __len__(self):
        return len(self.images)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return UnlabelledPool(self.images[idx], tuple(self.ids[i] for i in idx))


def stratified_holdout(data, frac, seed):
    """Split ``data`` into (train, holdout) with ``max(1, round(frac*n_c))`` per class.

    Classes with a single example stay entirely in train. Returns
    ``(train, None)`` when no class can spare an example.
    """
    rng = np.random.default_rng(seed)
    train_idx, hold_idx = [], []
    for c in range(data.n_classes):
        idx = np.flatnonzero(data.labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_hold = max(1, int(round(frac * len(idx)))) if len(idx) >= 2 else 0
        hold_idx += list(idx[:n_hold])
        train_idx += list(idx[n_hold:])
    if not hold_idx:
        return data, None
    return data.subset(sorted(train_idx)), data.subset(sorted(hold_idx))

"""MNIST IDX ingestion, deterministic subsetting, per-class accuracy.

IDX is the classic big-endian binary layout: a 4-byte magic (two zero bytes,
a dtype code, a dimension count), one 4-byte big-endian size per dimension,
then the raw unsigned bytes.  Images use magic 0x00000803, labels 0x00000801.
``.gz`` files are decompressed transparently.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .net import Batch, NetworkSpec, forward

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Flattened images scaled to [0,1] plus integer labels."""

    images: np.ndarray   # (N, pixels) float64
    labels: np.ndarray   # (N,) int64
    split: str = "train"

    def __post_init__(self):
        if self.images.ndim != 2 or self.labels.ndim != 1:
            raise DataFormatError("Dataset needs 2-D images and 1-D labels")
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataFormatError(
                f"count mismatch: {self.images.shape[0]} images vs "
                f"{self.labels.shape[0]} labels"
            )
        if self.images.shape[0] < 1:
            raise DataFormatError("Dataset is empty")
        if self.images.min() < 0.0 or self.images.max() > 1.0:
            raise DataFormatError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.images.shape[0]

    def batch(self, idx: np.ndarray) -> Batch:
        return Batch(self.images[idx], self.labels[idx])

    def as_batch(self) -> Batch:
        return Batch(self.images, self.labels)


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, expected_magic: int, field: str, path) -> np.ndarray:
    if len(raw) < 4:
        raise DataFormatError(f"truncated {field} file {path}: no magic")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise DataFormatError(
            f"bad magic in {field} file {path}: got {magic:#010x}, "
            f"expected {expected_magic:#010x}"
        )
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise DataFormatError(f"truncated {field} file {path}: incomplete dimensions")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = int(np.prod(dims))
    body = raw[header_end:]
    if len(body) != count:
        raise DataFormatError(
            f"truncated {field} file {path}: header promises {count} bytes, "
            f"found {len(body)}"
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Load an IDX image/label pair; pixels come out as float64 in [0,1]."""
    images_u8 = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, "images", images_path)
    labels_u8 = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, "labels", labels_path)
    if images_u8.shape[0] != labels_u8.shape[0]:
        raise DataFormatError(
            f"count mismatch: {images_u8.shape[0]} images in {images_path} vs "
            f"{labels_u8.shape[0]} labels in {labels_path}"
        )
    images = images_u8.reshape(images_u8.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(images=images, labels=labels_u8.astype(np.int64), split=split)


def write_idx_images(path, images_u8: np.ndarray) -> None:
    """Fixture writer: 3-D uint8 array to an IDX images file (bit-exact round trip)."""
    images_u8 = np.ascontiguousarray(images_u8, dtype=np.uint8)
    if images_u8.ndim != 3:
        raise DataFormatError("images fixture must be (N, rows, cols) uint8")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", IMAGES_MAGIC))
        fh.write(struct.pack(">3I", *images_u8.shape))
        fh.write(images_u8.tobytes())


def write_idx_labels(path, labels_u8: np.ndarray) -> None:
    labels_u8 = np.ascontiguousarray(labels_u8, dtype=np.uint8)
    if labels_u8.ndim != 1:
        raise DataFormatError("labels fixture must be 1-D uint8")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", LABELS_MAGIC))
        fh.write(struct.pack(">I", labels_u8.shape[0]))
        fh.write(labels_u8.tobytes())


def subset(data: Dataset, n: int, seed: int) -> Dataset:
    """Seeded class-balanced sample without replacement.

    Targets are as equal per class as the class supports allow, which keeps
    every class share within two percentage points of the full-set share on
    MNIST-like label distributions.  Same seed, same indices.
    """
    total = len(data)
    if not 1 <= n <= total:
        raise DataFormatError(f"subset size {n} not in [1, {total}]")
    classes = np.unique(data.labels)
    by_class = {int(c): np.flatnonzero(data.labels == c) for c in classes}

    # equal targets, then redistribute whatever small classes cannot supply
    quota = {c: len(ix) for c, ix in by_class.items()}
    take = {c: 0 for c in quota}
    remaining = n
    open_classes = sorted(quota)
    while remaining > 0 and open_classes:
        share = max(1, remaining // len(open_classes))
        progressed = False
        for c in list(open_classes):
            if remaining == 0:
                break
            add = min(share, quota[c] - take[c], remaining)
            if add > 0:
                take[c] += add
                remaining -= add
                progressed = True
            if take[c] == quota[c]:
                open_classes.remove(c)
        if not progressed:
            break

    rng = np.random.default_rng(seed)
    picked = []
    for c in sorted(take):
        if take[c] > 0:
            picked.append(rng.choice(by_class[c], size=take[c], replace=False))
    idx = np.sort(np.concatenate(picked))
    return Dataset(images=data.images[idx], labels=data.labels[idx], split=data.split)


@dataclass
class PerClassAccuracy:
    per_class: np.ndarray   # accuracy per digit
    overall: float
    support: np.ndarray     # samples per digit

    def num_classes(self) -> int:
        return len(self.per_class)


def per_class_accuracy(spec: NetworkSpec, params: np.ndarray,
                       data: Dataset) -> PerClassAccuracy:
    """Argmax accuracy per class; ties resolve to the lowest class index."""
    probs = forward(spec, params, data.as_batch())
    preds = np.argmax(probs, axis=1)
    k = spec.num_classes
    per_class = np.zeros(k)
    support = np.zeros(k, dtype=np.int64)
    for c in range(k):
        mask = data.labels == c
        support[c] = int(mask.sum())
        if support[c] > 0:
            per_class[c] = float(np.mean(preds[mask] == c))
    overall = float(np.mean(preds == data.labels))
    return PerClassAccuracy(per_class=per_class, overall=overall, support=support)

"""MNIST IDX parsing, pixel normalization, and shuffled mini-batches.

Only uncompressed IDX files are accepted; decompress ``.gz`` downloads
before pointing the CLI at them (``scripts/fetch_mnist.py`` does both).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError, FormatError, LengthError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
IMAGE_SIDE = 28
PIXELS = IMAGE_SIDE * IMAGE_SIDE

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


@dataclass(frozen=True)
class Dataset:
    """Normalized images [count, 784] in [0, 1] plus labels [count] in 0..9."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ConfigError(f"images/labels counts differ: "
                              f"{self.images.shape[0]} vs {self.labels.shape[0]}")

    @property
    def count(self) -> int:
        return self.images.shape[0]


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 128
    shuffle: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


def parse_idx_images(data: bytes) -> np.ndarray:
    """Parse an IDX image file into a uint8 tensor [count, 28, 28].

    The header is four big-endian u32s: magic 2051, count, rows, cols.
    Raises FormatError on a wrong magic or unexpected geometry and
    LengthError when the payload is shorter than the header promises.
    """
    if len(data) < 16:
        raise LengthError(f"image header needs 16 bytes, got {len(data)}")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGE_MAGIC:
        raise FormatError(f"bad image magic: expected {IMAGE_MAGIC}, got {magic}")
    if rows != IMAGE_SIDE or cols != IMAGE_SIDE:
        raise FormatError(f"expected {IMAGE_SIDE}x{IMAGE_SIDE} images, "
                          f"got {rows}x{cols}")
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise LengthError(f"image payload: expected {expected} bytes, "
                          f"got {len(data)}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(count, rows, cols).copy()


def parse_idx_labels(data: bytes) -> np.ndarray:
    """Parse an IDX label file into a uint8 vector [count] with values 0..9."""
    if len(data) < 8:
        raise LengthError(f"label header needs 8 bytes, got {len(data)}")
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABEL_MAGIC:
        raise FormatError(f"bad label magic: expected {LABEL_MAGIC}, got {magic}")
    expected = 8 + count
    if len(data) != expected:
        raise LengthError(f"label payload: expected {expected} bytes, "
                          f"got {len(data)}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8).copy()
    if labels.size and labels.max() > 9:
        bad = int(labels.max())
        raise ValueError(f"label byte out of range [0, 9]: {bad}")
    return labels


def normalize(raw: np.ndarray) -> np.ndarray:
    """Scale uint8 pixels to float32 in [0, 1] and flatten to [count, 784]."""
    flat = raw.reshape(raw.shape[0], -1)
    return flat.astype(np.float32) / np.float32(255.0)


def load_dataset(images_path: Path, labels_path: Path) -> Dataset:
    images = parse_idx_images(Path(images_path).read_bytes())
    labels = parse_idx_labels(Path(labels_path).read_bytes())
    if images.shape[0] != labels.shape[0]:
        raise LengthError(f"{images_path}: {images.shape[0]} images but "
                          f"{labels.shape[0]} labels")
    return Dataset(images=normalize(images), labels=labels.astype(np.int64))


def load_data_dir(data_dir: Path) -> tuple[Dataset, Dataset]:
    """Load (train, test) from the four canonical IDX files in data_dir."""
    d = Path(data_dir)
    for name in (TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS):
        if not (d / name).is_file():
            raise FileNotFoundError(
                f"missing {d / name}; fetch the MNIST IDX files first "
                f"(see scripts/fetch_mnist.py) and decompress them")
    train = load_dataset(d / TRAIN_IMAGES, d / TRAIN_LABELS)
    test = load_dataset(d / TEST_IMAGES, d / TEST_LABELS)
    return train, test


def epoch_order(count: int, plan: BatchPlan, epoch: int) -> np.ndarray:
    """Sample order for one epoch; a pure function of (seed, epoch)."""
    if not plan.shuffle:
        return np.arange(count)
    return np.random.default_rng([plan.seed, epoch]).permutation(count)


def batches(dataset: Dataset, plan: BatchPlan,
            epoch: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (images[b, 784], labels[b]) covering every sample exactly once.

    The final batch may be smaller than ``plan.batch_size``.
    """
    count = dataset.count
    if plan.batch_size > count:
        raise ConfigError(f"batch_size {plan.batch_size} exceeds "
                          f"dataset count {count}")
    order = epoch_order(count, plan, epoch)
    for start in range(0, count, plan.batch_size):
        idx = order[start:start + plan.batch_size]
        yield dataset.images[idx], dataset.labels[idx]

"""Desk-scale classification datasets for the training experiments.

Two sources: seeded synthetic Gaussian clusters, and a small bundled digit
set (8x8 grayscale images, at most 500 samples) stored in a simple binary
format:

    bytes 0..3    magic b"NGL1"
    bytes 4..7    sample count, uint32 little-endian
    bytes 8..11   feature dimension, uint32 little-endian
    then          count*dims float32 features, row-major
    then          count uint8 labels
"""

from __future__ import annotations

import struct
from importlib import resources

import numpy as np

MAGIC = b"NGL1"
BUNDLED_DIGITS = "digits_8x8_500.bin"


def synthetic_clusters(
    seed: int,
    classes: int = 3,
    samples_per_class: int = 100,
    dim: int = 64,
    cluster_spread: float = 0.6,
):
    """Gaussian class clusters with unit-scale random means.

    Returns ``(features, labels)`` with features of shape
    ``(classes * samples_per_class, dim)``; deterministic in the seed.
    """
    if classes < 1 or samples_per_class < 1 or dim < 1:
        raise ValueError("classes, samples_per_class and dim must be positive")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((classes, dim))
    features = np.concatenate(
        [mean + cluster_spread * rng.standard_normal((samples_per_class, dim)) for mean in means]
    )
    labels = np.repeat(np.arange(classes), samples_per_class)
    return features, labels


def one_hot(labels, classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"labels must lie in [0, {classes})")
    out = np.zeros((labels.size, classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def write_dataset_file(path, features, labels) -> None:
    features = np.ascontiguousarray(features, dtype=np.float32)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if features.ndim != 2 or labels.ndim != 1 or features.shape[0] != labels.shape[0]:
        raise ValueError("features must be (count, dims) and labels (count,)")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", features.shape[0], features.shape[1]))
        fh.write(features.tobytes())
        fh.write(labels.tobytes())


def load_dataset_file(path):
    """Read a dataset file; returns float64 features and int labels."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a dataset file (bad magic)")
    count, dims = struct.unpack("<II", blob[4:12])
    expected = 12 + count * dims * 4 + count
    if len(blob) != expected:
        raise ValueError(f"{path}: truncated dataset file ({len(blob)} bytes, expected {expected})")
    features = np.frombuffer(blob, dtype="<f4", count=count * dims, offset=12)
    labels = np.frombuffer(blob, dtype=np.uint8, count=count, offset=12 + count * dims * 4)
    return features.reshape(count, dims).astype(float), labels.astype(int)


def load_bundled_digits():
    """The bundled 8x8 digit subset (500 samples, features scaled to [0, 1])."""
    ref = resources.files("natgrad_lens").joinpath("data", BUNDLED_DIGITS)
    with resources.as_file(ref) as path:
        return load_dataset_file(path)

"""Dataset ingestion: IDX files (MNIST) and synthetic blobs for tests."""

from __future__ import annotations

import gzip
import struct

import numpy as np

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


def _open(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def load_idx_images(path) -> np.ndarray:
    """Load an IDX image file into a float64 array scaled to [0, 1].

    Returns shape (n, rows * cols).
    """
    with _open(path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">IIII", f.read(16))
        if magic != IDX_MAGIC_IMAGES:
            raise ValueError(f"{path}: bad IDX image magic 0x{magic:08x}")
        raw = f.read(n * rows * cols)
    images = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    return images.reshape(n, rows * cols)


def load_idx_labels(path) -> np.ndarray:
    with _open(path, "rb") as f:
        magic, n = struct.unpack(">II", f.read(8))
        if magic != IDX_MAGIC_LABELS:
            raise ValueError(f"{path}: bad IDX label magic 0x{magic:08x}")
        raw = f.read(n)
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def save_idx_images(path, images: np.ndarray, rows: int | None = None, cols: int | None = None) -> None:
    """Write uint8 images (n, rows*cols) or (n, rows, cols) as IDX.

    For flat input the geometry defaults to the square root of the pixel
    count (images are assumed square unless rows/cols are given).
    """
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim == 3:
        rows = images.shape[1] if rows is None else rows
        cols = images.shape[2] if cols is None else cols
    elif rows is None or cols is None:
        side = int(round(images.shape[1] ** 0.5))
        if side * side != images.shape[1]:
            raise ValueError(
                f"cannot infer geometry for {images.shape[1]} pixels; pass rows/cols"
            )
        rows = side if rows is None else rows
        cols = side if cols is None else cols
    images = images.reshape(-1, rows, cols)
    with _open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, len(images), rows, cols))
        f.write(images.tobytes())


def save_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with _open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_MAGIC_LABELS, len(labels)))
        f.write(labels.tobytes())


def make_blobs(
    n_per_class: int,
    n_features: int = 2,
    n_classes: int = 2,
    spread: float = 0.08,
    seed: int = 0,
):
    """Well-separated Gaussian blobs in [0, 1]^d, one cluster per class.

    Cluster centers sit on distinct corners of the unit cube, pulled in
    toward the center so that samples stay inside [0, 1] after clipping.
    """
    rng = np.random.default_rng(seed)
    centers = np.zeros((n_classes, n_features))
    for c in range(n_classes):
        corner = [(c >> b) & 1 for b in range(n_features)]
        centers[c] = 0.2 + 0.6 * np.array(corner, dtype=np.float64)
        if n_features < 2 or 2**n_features < n_classes:
            centers[c] = 0.2 + 0.6 * (c / max(1, n_classes - 1))
    X = np.concatenate(
        [
            centers[c] + spread * rng.standard_normal((n_per_class, n_features))
            for c in range(n_classes)
        ]
    )
    y = np.repeat(np.arange(n_classes), n_per_class)
    order = rng.permutation(len(y))
    return np.clip(X[order], 0.0, 1.0), y[order]

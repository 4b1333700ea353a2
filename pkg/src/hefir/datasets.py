"""Readers for the MNIST IDX image/label files (plain or gzipped).

IDX is big-endian: magic (0x803 images / 0x801 labels), item count,
then dimensions, then row-major unsigned bytes.
"""

from __future__ import annotations

import gzip
import os
import struct

import numpy as np

from .codec import encode_scalar
from .errors import FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# repo checkout layout: src/hefir/datasets.py -> <repo>/data/mnist
DEFAULT_DATA_DIR = os.path.join(
    os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))),
    "data",
    "mnist",
)


def _open_maybe_gzip(path: str):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx_images(path: str) -> np.ndarray:
    with _open_maybe_gzip(path) as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise FormatError("truncated IDX image header", offset=len(header))
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IMAGE_MAGIC:
            raise FormatError(f"bad IDX image magic {magic:#x}", offset=0)
        data = fh.read(count * rows * cols)
        if len(data) != count * rows * cols:
            raise FormatError("truncated IDX image payload", offset=16 + len(data))
    return np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path: str) -> np.ndarray:
    with _open_maybe_gzip(path) as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise FormatError("truncated IDX label header", offset=len(header))
        magic, count = struct.unpack(">II", header)
        if magic != LABEL_MAGIC:
            raise FormatError(f"bad IDX label magic {magic:#x}", offset=0)
        data = fh.read(count)
        if len(data) != count:
            raise FormatError("truncated IDX label payload", offset=8 + len(data))
    return np.frombuffer(data, dtype=np.uint8)


def _find(data_dir: str, stem: str) -> str:
    for name in (stem, stem + ".gz"):
        path = os.path.join(data_dir, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"{stem}[.gz] not found under {data_dir}")


def load_mnist(data_dir: str | None = None, split: str = "test"):
    """(images uint8 (n,28,28), labels uint8 (n,)) for the given split."""
    data_dir = data_dir or os.environ.get("HEFIR_MNIST_DIR", DEFAULT_DATA_DIR)
    stem = "t10k" if split == "test" else "train"
    images = read_idx_images(_find(data_dir, f"{stem}-images-idx3-ubyte"))
    labels = read_idx_labels(_find(data_dir, f"{stem}-labels-idx1-ubyte"))
    return images, labels


def integerize_image(image: np.ndarray, input_scale: int) -> np.ndarray:
    """Normalize bytes to [0, 1], scale, and round: round(px/255 * scale)."""
    h, w = image.shape[:2]
    flat = image.reshape(h, w, -1).astype(np.int64)
    out = np.empty_like(flat)
    for v in np.unique(flat):
        out[flat == v] = encode_scalar(v / 255.0, input_scale)
    return out

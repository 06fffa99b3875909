"""Datasets: two synthetic 2-D problems and an IDX reader/writer."""

from __future__ import annotations

import gzip
import math
import struct
from pathlib import Path

import numpy as np

from .prng import Xoshiro256

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

# IDX type byte -> numpy big-endian dtype
_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {dt.newbyteorder("="): code for code, dt in _IDX_TYPES.items()}


class IdxFormatError(ValueError):
    pass


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path, expected_magic: int | None = None) -> np.ndarray:
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: truncated IDX file ({len(raw)} bytes, header needs 4)")
    (magic,) = struct.unpack(">I", raw[:4])
    if expected_magic is not None and magic != expected_magic:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08X}, expected 0x{expected_magic:08X}")
    if magic >> 16 != 0 or (magic >> 8) & 0xFF not in _IDX_TYPES:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08X}")
    dtype = _IDX_TYPES[(magic >> 8) & 0xFF]
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise IdxFormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    count = math.prod(dims)
    need = head + count * dtype.itemsize
    if len(raw) < need:
        raise IdxFormatError(f"{path}: truncated IDX data ({len(raw)} bytes, need {need})")
    if len(raw) > need:
        raise IdxFormatError(f"{path}: {len(raw) - need} trailing bytes after IDX data")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=head).reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path, array) -> None:
    arr = np.asarray(array)
    if arr.dtype.newbyteorder("=") not in _IDX_CODES:
        raise ValueError(f"dtype {arr.dtype} has no IDX type code")
    code = _IDX_CODES[arr.dtype.newbyteorder("=")]
    header = struct.pack(">I", (code << 8) | arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    body = arr.astype(_IDX_TYPES[code]).tobytes()
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(header + body)


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Read an image/label IDX pair; pixels scaled to [0, 1] and flattened per image."""
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return flat, labels.astype(np.int64)


def make_synthetic(kind: str, n_per_class: int, noise: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two-class 2-D data.

    ``blobs``: points around (-2, 0) and (2, 0) with Gaussian spread ``noise``.
    ``spirals``: two interleaved Archimedean spirals of 1.5 turns (radius
    growing linearly with angle) with Gaussian jitter ``noise``.  Features are
    rows, labels are 0/1; classes are stored in blocks.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = Xoshiro256(seed)
    feats = []
    for c in (0, 1):
        if kind == "blobs":
            centre = np.array([4.0 * c - 2.0, 0.0])
            pts = centre + noise * rng.standard_normal((n_per_class, 2))
        elif kind == "spirals":
            # sqrt keeps the point density roughly uniform along the arc
            t = np.sqrt(rng.random(n_per_class))
            theta = 3.0 * math.pi * t + c * math.pi
            r = 2.0 * t
            pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
            pts = pts + noise * rng.standard_normal((n_per_class, 2))
        else:
            raise ValueError(f"unknown dataset kind {kind!r}; expected 'blobs' or 'spirals'")
        feats.append(pts)
    labels = np.repeat(np.arange(2, dtype=np.int64), n_per_class)
    return np.vstack(feats), labels

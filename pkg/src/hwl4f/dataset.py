"""MNIST ingestion (IDX files), seeded stratified subsampling and a synthetic
digit-like corpus for offline tests."""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .optics import RngStream

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


class IdxLengthError(IdxFormatError):
    pass


class DataConfigError(ValueError):
    pass


def parse_idx(buf: bytes, expect: str) -> np.ndarray:
    """Decode an unsigned-byte IDX container.

    ``expect`` is ``"images"`` (magic 0x803, count x rows x cols) or
    ``"labels"`` (magic 0x801, count).
    """
    if expect not in ("images", "labels"):
        raise ValueError(f"expect must be 'images' or 'labels', got {expect!r}")
    magic_want, ndim = (IMAGES_MAGIC, 3) if expect == "images" else (LABELS_MAGIC, 1)
    if len(buf) < 4:
        raise IdxLengthError("stream shorter than the IDX magic")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != magic_want:
        raise IdxFormatError(f"bad IDX magic 0x{magic:08x} for {expect} (want 0x{magic_want:08x})")
    header_len = 4 + 4 * ndim
    if len(buf) < header_len:
        raise IdxLengthError("truncated IDX dimension header")
    dims = struct.unpack(">" + "I" * ndim, buf[4:header_len])
    size = int(np.prod(dims))
    payload = buf[header_len:]
    if len(payload) < size:
        raise IdxLengthError(f"IDX payload has {len(payload)} bytes, header promises {size}")
    return np.frombuffer(payload, dtype=np.uint8, count=size).reshape(dims).copy()


def encode_idx(array: np.ndarray) -> bytes:
    """Canonical IDX encoding of a uint8 array (1-D labels or 3-D images)."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError("IDX encoding here supports uint8 payloads only")
    if array.ndim == 1:
        magic = LABELS_MAGIC
    elif array.ndim == 3:
        magic = IMAGES_MAGIC
    else:
        raise ValueError(f"unsupported IDX rank {array.ndim}")
    header = struct.pack(">I", magic) + struct.pack(">" + "I" * array.ndim, *array.shape)
    return header + np.ascontiguousarray(array).tobytes()


def read_idx_file(path: str | Path, expect: str) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return parse_idx(raw, expect)


def load_mnist(images_path: str | Path, labels_path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Images scaled to [0, 1] as float64 (count, 28, 28) and int64 labels."""
    images = read_idx_file(images_path, "images")
    labels = read_idx_file(labels_path, "labels")
    if len(images) != len(labels):
        raise DataConfigError(f"{len(images)} images but {len(labels)} labels")
    return images.astype(np.float64) / 255.0, labels.astype(np.int64)


@dataclass
class DatasetSplit:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    seed: int
    train_idx: np.ndarray
    test_idx: np.ndarray

    def digest(self) -> str:
        """Hash of the chosen indices; equal digests mean identical splits."""
        h = hashlib.sha256()
        h.update(self.train_idx.astype("<i8").tobytes())
        h.update(b"|")
        h.update(self.test_idx.astype("<i8").tobytes())
        return h.hexdigest()


def subsample(images: np.ndarray, labels: np.ndarray, train_n: int = 600, test_n: int = 100,
              seed: int = 0, classes: int = 10) -> DatasetSplit:
    """Label-stratified disjoint draw of train_n/classes and test_n/classes per class."""
    labels = np.asarray(labels)
    if train_n % classes or test_n % classes:
        raise DataConfigError("split sizes must be multiples of the class count")
    if len(images) < train_n + test_n:
        raise DataConfigError(f"need {train_n + test_n} samples, have {len(images)}")
    per_train, per_test = train_n // classes, test_n // classes
    rng = RngStream(seed).generator
    train_parts, test_parts = [], []
    for c in range(classes):
        pool = np.flatnonzero(labels == c)
        if len(pool) < per_train + per_test:
            raise DataConfigError(f"class {c} has {len(pool)} samples, "
                                  f"needs {per_train + per_test}")
        chosen = rng.choice(pool, size=per_train + per_test, replace=False)
        train_parts.append(chosen[:per_train])
        test_parts.append(chosen[per_train:])
    train_idx = rng.permutation(np.concatenate(train_parts))
    test_idx = rng.permutation(np.concatenate(test_parts))
    return DatasetSplit(images[train_idx], labels[train_idx], images[test_idx],
                        labels[test_idx], seed, train_idx, test_idx)


# ---------------------------------------------------------------------------
# Synthetic glyphs
# ---------------------------------------------------------------------------

# Strokes per class on a unit square (x right, y down), as polyline vertices.
_GLYPHS = {
    0: [[(0.3, 0.2), (0.7, 0.2), (0.75, 0.5), (0.7, 0.8), (0.3, 0.8), (0.25, 0.5), (0.3, 0.2)]],
    1: [[(0.5, 0.15), (0.5, 0.85)], [(0.38, 0.3), (0.5, 0.15)]],
    2: [[(0.3, 0.25), (0.5, 0.15), (0.7, 0.3), (0.3, 0.85), (0.72, 0.85)]],
    3: [[(0.3, 0.18), (0.7, 0.25), (0.45, 0.5), (0.72, 0.7), (0.3, 0.85)]],
    4: [[(0.62, 0.85), (0.62, 0.15), (0.25, 0.6), (0.78, 0.6)]],
    5: [[(0.72, 0.15), (0.32, 0.15), (0.3, 0.45), (0.68, 0.55), (0.62, 0.83), (0.28, 0.82)]],
    6: [[(0.65, 0.15), (0.32, 0.5), (0.35, 0.82), (0.68, 0.75), (0.62, 0.52), (0.33, 0.55)]],
    7: [[(0.25, 0.17), (0.75, 0.17), (0.42, 0.85)]],
    8: [[(0.5, 0.5), (0.3, 0.3), (0.5, 0.15), (0.7, 0.3), (0.5, 0.5), (0.28, 0.7),
         (0.5, 0.86), (0.72, 0.7), (0.5, 0.5)]],
    9: [[(0.68, 0.45), (0.35, 0.42), (0.33, 0.2), (0.67, 0.18), (0.68, 0.45), (0.6, 0.86)]],
}


def _render(strokes, n: int, width: float, transform: np.ndarray, shift: np.ndarray) -> np.ndarray:
    yy, xx = np.mgrid[0:n, 0:n]
    pts = np.stack([(xx + 0.5) / n, (yy + 0.5) / n], axis=-1)
    dist = np.full((n, n), np.inf)
    for stroke in strokes:
        verts = (np.asarray(stroke) - 0.5) @ transform.T + 0.5 + shift
        for p, q in zip(verts[:-1], verts[1:]):
            d = q - p
            t = np.clip(((pts - p) @ d) / max(d @ d, 1e-12), 0.0, 1.0)
            proj = p + t[..., None] * d
            dist = np.minimum(dist, np.linalg.norm(pts - proj, axis=-1))
    # soft-edged pen, 1 inside the stroke, linear falloff over ~1 pixel
    return np.clip((width - dist) * n + 0.5, 0.0, 1.0)


def synthetic_corpus(count: int, seed: int, n: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """Digit-like glyphs with seeded affine jitter; labels cycle 0..9."""
    if count <= 0:
        raise DataConfigError("count must be positive")
    rng = RngStream(seed).generator
    images = np.empty((count, n, n))
    labels = np.arange(count) % 10
    for i, c in enumerate(labels):
        angle = rng.uniform(-0.25, 0.25)
        scale = rng.uniform(0.8, 1.05)
        shear = rng.uniform(-0.2, 0.2)
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        transform = scale * rot @ np.array([[1.0, shear], [0.0, 1.0]])
        shift = rng.uniform(-0.06, 0.06, 2)
        width = rng.uniform(0.03, 0.055)
        img = _render(_GLYPHS[int(c)], n, width, transform, shift)
        # quantize like an 8-bit scan so SLM1 encoding is lossless
        images[i] = np.round(img * 255.0) / 255.0
    return images, labels.astype(np.int64)

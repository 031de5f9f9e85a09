"""Datasets and file formats: Gaussian sources, MNIST IDX, PGM images, projection packs."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import StcaParams
from .errors import FormatError
from .linalg import as_seed, dct_matrix, gaussian_projection

IDX_IMAGES = 2051
IDX_LABELS = 2049
PACK_MAGIC = b"STCAPACK"


class IdxFormatError(FormatError):
    """Malformed IDX file; ``category`` is bad-magic, truncated-file or dimension-mismatch."""

    def __init__(self, category: str, offset: int, message: str):
        super().__init__(f"{category} at byte offset {offset}: {message}")
        self.category = category
        self.offset = offset


@dataclass
class Dataset:
    samples: np.ndarray  # (count, n)
    shape_hint: tuple | None = None
    source_tag: str = ""
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("dataset contains non-finite values")

    def __len__(self):
        return len(self.samples)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def pixel_variance(self) -> float:
        return float(np.var(self.samples))


def gen_gaussian(n: int, count: int, sigma2_x: float, seed) -> Dataset:
    """``count`` i.i.d. draws of N(0, sigma2_x I_n)."""
    if count < 1 or n < 1 or sigma2_x < 0:
        raise ValueError("need n >= 1, count >= 1 and sigma2_x >= 0")
    rng = as_seed(seed, "gaussian-source").generator()
    return Dataset(rng.normal(0.0, np.sqrt(sigma2_x), size=(count, n)), source_tag=f"gaussian(n={n})")


# --- IDX ------------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def parse_idx(data: bytes, expected_magic: int) -> np.ndarray:
    """Decode an unsigned-byte IDX payload into an array of its declared shape."""
    if len(data) < 4:
        raise IdxFormatError("truncated-file", len(data), "file ends inside the magic number")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic != expected_magic:
        raise IdxFormatError("bad-magic", 0, f"expected {expected_magic}, found {magic}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxFormatError("truncated-file", len(data), f"header needs {header} bytes")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    size = int(np.prod(dims, dtype=np.int64))
    end = header + size
    if len(data) < end:
        raise IdxFormatError("truncated-file", len(data), f"payload declares {size} bytes, {len(data) - header} present")
    if len(data) > end:
        raise IdxFormatError("dimension-mismatch", end, f"{len(data) - end} bytes beyond the declared dimensions {dims}")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_mnist_idx(images_path, labels_path=None) -> Dataset:
    """Load IDX images (optionally gzipped) as vectors scaled to [0, 1]."""
    images = parse_idx(_read_bytes(images_path), IDX_IMAGES)
    labels = None
    if labels_path is not None:
        labels = parse_idx(_read_bytes(labels_path), IDX_LABELS)
        if len(labels) != len(images):
            raise IdxFormatError("dimension-mismatch", 4,
                                 f"{len(labels)} labels for {len(images)} images")
    count, rows, cols = images.shape
    return Dataset(images.reshape(count, rows * cols) / 255.0, shape_hint=(rows, cols),
                   source_tag=f"mnist:{Path(images_path).name}", labels=labels)


def write_idx(path, array, magic: int):
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def mnist_split(directory, split: str) -> Dataset:
    """``split`` is "train" or "t10k"; files may be plain or gzipped."""
    directory = Path(directory)
    found = {}
    for kind, suffix in (("images", "idx3"), ("labels", "idx1")):
        for name in (f"{split}-{kind}-{suffix}-ubyte", f"{split}-{kind}-{suffix}-ubyte.gz"):
            if (directory / name).exists():
                found[kind] = directory / name
                break
        else:
            raise FileNotFoundError(f"no {split} {kind} file in {directory}")
    return load_mnist_idx(found["images"], found["labels"])


# --- PGM ------------------------------------------------------------------------

def write_pgm(image, shape, path):
    """Binary P5 greymap; values are clamped to [0, 1] and rounded to 8 bits."""
    h, w = shape
    pixels = np.clip(np.asarray(image, dtype=float).reshape(h, w), 0.0, 1.0)
    body = np.rint(pixels * 255).astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii") + body)


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1)
    return pixels.reshape(h, w) / maxval


def tile_images(columns, shape, gap: int = 2) -> np.ndarray:
    """Arrange equal-length lists of images into a grid: one column per list."""
    h, w = shape
    rows = len(columns[0])
    grid = np.ones((rows * (h + gap) - gap, len(columns) * (w + gap) - gap))
    for c, col in enumerate(columns):
        for r, img in enumerate(col):
            grid[r * (h + gap):r * (h + gap) + h, c * (w + gap):c * (w + gap) + w] = \
                np.clip(np.asarray(img).reshape(h, w), 0.0, 1.0)
    return grid


# --- projection packs -----------------------------------------------------------

@dataclass
class ProjectionPack:
    """Known-model parameters shared by encoder, attacker and authorized user."""

    W: np.ndarray  # (d, n) orthonormal
    A: np.ndarray  # (m, d)
    params: StcaParams

    @classmethod
    def build(cls, params: StcaParams, seed) -> ProjectionPack:
        W = dct_matrix(params.n)
        A = gaussian_projection(params.m, params.n, params.n, as_seed(seed).child("projection"))
        return cls(W, A, params)

    @property
    def B(self) -> np.ndarray:
        return self.A @ self.W

    def save(self, path):
        p = self.params
        d = self.W.shape[0]
        head = PACK_MAGIC + struct.pack("<5Q", p.n, d, p.m, p.s_x, p.s_ns)
        with open(path, "wb") as fh:
            fh.write(head + self.W.astype("<f8").tobytes() + self.A.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> ProjectionPack:
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:8] != PACK_MAGIC:
            raise FormatError(f"{path}: not a projection pack (bad magic at offset 0)")
        n, d, m, s_x, s_ns = struct.unpack_from("<5Q", data, 8)
        off = 48
        need = off + 8 * (d * n + m * d)
        if len(data) != need:
            raise FormatError(f"{path}: expected {need} bytes, found {len(data)}")
        W = np.frombuffer(data, "<f8", d * n, off).reshape(d, n).astype(float)
        A = np.frombuffer(data, "<f8", m * d, off + 8 * d * n).reshape(m, d).astype(float)
        return cls(W, A, StcaParams(m=m, n=n, s_x=s_x, s_ns=s_ns))

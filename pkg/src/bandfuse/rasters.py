"""Raster containers, normalization, patch extraction, and HSIB file I/O.

HSIB layout (all little-endian):
    bytes 0-3   ASCII magic ``HSIB``
    byte  4     version (1)
    bytes 5-7   zero padding
    bytes 8-19  three uint32: H, W, B
    then        H*W*B float32 values in [band][row][col] order

LiDAR rasters are stored as B=1 files. Labels are a headerless UTF-8 CSV
of ``row,col,class_id`` triples (zero-based coordinates, 1-based classes).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"HSIB"
VERSION = 1
_HEADER = struct.Struct("<4sB3x3I")


class RasterFormatError(ValueError):
    """Malformed HSIB file or label CSV."""


@dataclass(frozen=True)
class HsiCube:
    """H x W x B hyperspectral raster, stored band-sequential."""

    data: np.ndarray  # shape (B, H, W), float64

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 3:
            raise ValueError("HsiCube data must be (bands, height, width)")
        if min(arr.shape) < 1:
            raise ValueError("HsiCube dimensions must be positive")
        if not np.all(np.isfinite(arr)):
            raise ValueError("HsiCube data contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LidarRaster:
    """H x W elevation raster co-registered with an HsiCube."""

    data: np.ndarray  # shape (H, W), float64

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 2:
            raise ValueError("LidarRaster data must be (height, width)")
        if min(arr.shape) < 1:
            raise ValueError("LidarRaster dimensions must be positive")
        if not np.all(np.isfinite(arr)):
            raise ValueError("LidarRaster data contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class PatchSet:
    """Paired p x p HSI and LiDAR windows sharing center coordinates."""

    patch_size: int
    hsi_patches: np.ndarray  # (N, p, p, B)
    lidar_patches: np.ndarray  # (N, p, p)
    centers: tuple  # N (row, col) pairs

    @property
    def count(self) -> int:
        return self.hsi_patches.shape[0]

    @property
    def bands(self) -> int:
        return self.hsi_patches.shape[3]


@dataclass(frozen=True)
class LabelMap:
    """Sparse ground-truth labels used only by the evaluation harness."""

    entries: tuple  # (row, col, class_id) triples
    class_count: int


def load_raster(path) -> HsiCube | LidarRaster:
    """Read an HSIB file; B=1 files come back as a LidarRaster."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise RasterFormatError(
            f"truncated header: need {_HEADER.size} bytes, got {len(raw)} (byte offset {len(raw)})"
        )
    magic, version, h, w, b = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise RasterFormatError(f"bad magic {magic!r} at byte offset 0")
    if version != VERSION:
        raise RasterFormatError(f"unsupported version {version} at byte offset 4")
    if min(h, w, b) < 1:
        raise RasterFormatError("zero-sized dimension in header at byte offset 8")
    count = h * w * b
    if count > (1 << 32):
        raise RasterFormatError("dimension overflow in header at byte offset 8")
    expected = _HEADER.size + 4 * count
    if len(raw) != expected:
        raise RasterFormatError(
            f"payload size mismatch: expected {expected} bytes, got {len(raw)} (byte offset {min(len(raw), expected)})"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size, count=count)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise RasterFormatError(f"non-finite value at byte offset {_HEADER.size + 4 * bad}")
    data = values.astype(np.float64).reshape(b, h, w)
    if b == 1:
        return LidarRaster(data[0])
    return HsiCube(data)


def save_raster(raster: HsiCube | LidarRaster, path) -> None:
    """Write an HSIB file; load_raster(save_raster(x)) is bit-exact for f32 data."""
    if isinstance(raster, HsiCube):
        data = raster.data
    elif isinstance(raster, LidarRaster):
        data = raster.data[np.newaxis]
    else:
        raise TypeError("save_raster expects an HsiCube or LidarRaster")
    b, h, w = data.shape
    payload = np.ascontiguousarray(data, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise ValueError("refusing to write non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, h, w, b))
        fh.write(payload.tobytes())


def normalize_per_band(cube: HsiCube) -> HsiCube:
    """Min-max scale each band to [0, 1]; constant bands map to zeros."""
    data = cube.data
    lo = data.min(axis=(1, 2), keepdims=True)
    hi = data.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    out = np.zeros_like(data)
    np.divide(data - lo, span, out=out, where=span > 0)
    return HsiCube(out)


def normalize_lidar(lidar: LidarRaster) -> LidarRaster:
    """Min-max scale the whole raster to [0, 1]; constant rasters map to zeros."""
    data = lidar.data
    lo, hi = data.min(), data.max()
    if hi > lo:
        return LidarRaster((data - lo) / (hi - lo))
    return LidarRaster(np.zeros_like(data))


def extract_patches(cube: HsiCube, lidar: LidarRaster, p: int, stride: int = 1) -> PatchSet:
    """Slide a p x p window over both rasters jointly; windows stay interior."""
    if p < 1 or p % 2 == 0:
        raise ValueError("patch size must be an odd positive integer")
    if stride < 1:
        raise ValueError("stride must be positive")
    if (cube.height, cube.width) != (lidar.height, lidar.width):
        raise ValueError("cube and lidar dimensions must match")
    if p > cube.height or p > cube.width:
        raise ValueError(f"patch size {p} exceeds raster dims {cube.height}x{cube.width}")
    rows = range(0, cube.height - p + 1, stride)
    cols = range(0, cube.width - p + 1, stride)
    half = p // 2
    hsi = cube.data  # (B, H, W)
    hsi_patches = np.stack(
        [hsi[:, r:r + p, c:c + p].transpose(1, 2, 0) for r in rows for c in cols]
    )
    lidar_patches = np.stack(
        [lidar.data[r:r + p, c:c + p] for r in rows for c in cols]
    )
    centers = tuple((r + half, c + half) for r in rows for c in cols)
    return PatchSet(p, hsi_patches, lidar_patches, centers)


def load_labels(path, height: int, width: int) -> LabelMap:
    """Parse and validate a label CSV against the raster bounds."""
    entries = []
    seen = set()
    max_class = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise RasterFormatError(f"line {lineno}: expected row,col,class_id")
            try:
                r, c, cls = (int(x) for x in parts)
            except ValueError as exc:
                raise RasterFormatError(f"line {lineno}: non-integer field") from exc
            if not (0 <= r < height and 0 <= c < width):
                raise RasterFormatError(f"line {lineno}: coordinate ({r},{c}) out of bounds")
            if cls < 1:
                raise RasterFormatError(f"line {lineno}: class_id must be >= 1")
            if (r, c) in seen:
                raise RasterFormatError(f"line {lineno}: duplicate coordinate ({r},{c})")
            seen.add((r, c))
            entries.append((r, c, cls))
            max_class = max(max_class, cls)
    return LabelMap(tuple(entries), max_class)


def save_labels(labels: LabelMap, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r, c, cls in labels.entries:
            fh.write(f"{r},{c},{cls}\n")

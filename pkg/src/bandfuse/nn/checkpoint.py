"""BFNN checkpoint files.

Layout (all little-endian): magic ``BFNN``, version byte (1), uint32 layer
count, then one record per layer in construction order: kind tag byte,
uint8 array count, and per array a uint8 ndim, ndim uint32 dims, and the
float32 payload. Parameters are stored float32; loading restores float64.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"BFNN"
VERSION = 1

KIND_TAGS = {"dense": 1, "conv3x3": 2, "activation": 3, "pool2x2": 4, "upsample2x": 5}
_TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}


class CheckpointError(ValueError):
    """Malformed or mismatched checkpoint file."""


def save_checkpoint(layers: list, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(layers)))
        for layer in layers:
            params = layer.params()
            fh.write(struct.pack("<BB", KIND_TAGS[layer.kind], len(params)))
            for p in params:
                fh.write(struct.pack("<B", p.value.ndim))
                fh.write(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
                fh.write(np.ascontiguousarray(p.value, dtype="<f4").tobytes())


def load_checkpoint(layers: list, path) -> None:
    """Load parameters into an already-constructed layer list, validating shapes."""
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(raw):
            raise CheckpointError(f"truncated checkpoint at byte offset {off}")
        vals = struct.unpack_from(fmt, raw, off)
        off += size
        return vals

    if raw[:4] != MAGIC:
        raise CheckpointError("bad checkpoint magic")
    off = 4
    (version,) = take("<B")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (count,) = take("<I")
    if count != len(layers):
        raise CheckpointError(f"checkpoint has {count} layers, model has {len(layers)}")
    for idx, layer in enumerate(layers):
        tag, nparams = take("<BB")
        if _TAG_KINDS.get(tag) != layer.kind:
            raise CheckpointError(f"layer {idx}: kind tag {tag} does not match {layer.kind!r}")
        params = layer.params()
        if nparams != len(params):
            raise CheckpointError(f"layer {idx}: parameter count mismatch")
        for p in params:
            (ndim,) = take("<B")
            shape = take(f"<{ndim}I") if ndim else ()
            if tuple(shape) != p.value.shape:
                raise CheckpointError(
                    f"layer {idx}: shape {tuple(shape)} does not match {p.value.shape}"
                )
            n = int(np.prod(shape)) if shape else 1
            size = 4 * n
            if off + size > len(raw):
                raise CheckpointError(f"truncated payload at byte offset {off}")
            vals = np.frombuffer(raw, dtype="<f4", count=n, offset=off)
            off += size
            p.value[...] = vals.reshape(p.value.shape).astype(np.float64)
    if off != len(raw):
        raise CheckpointError(f"{len(raw) - off} trailing bytes after last layer record")

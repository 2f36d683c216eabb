"""Conv3x3 kernel backend selection.

The compiled Cython extension is preferred when importable; the numpy
im2col implementation is the fallback. Set ``BANDFUSE_KERNELS=python``
or ``=cython`` to force a backend (the latter raises if the extension
is missing). Both backends accept C-contiguous float64 arrays.
"""

from __future__ import annotations

import os

import numpy as np

from . import kernels_py

try:
    from . import _kernels
except ImportError:
    _kernels = None

_forced = os.environ.get("BANDFUSE_KERNELS", "").lower()
if _forced == "python":
    _impl = kernels_py
    BACKEND = "python"
elif _forced == "cython":
    if _kernels is None:
        raise ImportError("BANDFUSE_KERNELS=cython but the compiled extension is unavailable")
    _impl = _kernels
    BACKEND = "cython"
elif _kernels is not None:
    _impl = _kernels
    BACKEND = "cython"
else:
    _impl = kernels_py
    BACKEND = "python"


def _prep(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _impl.conv3x3_forward(_prep(x), _prep(w), np.ascontiguousarray(b, dtype=np.float64))


def conv3x3_backward(x: np.ndarray, w: np.ndarray, gout: np.ndarray):
    return _impl.conv3x3_backward(_prep(x), _prep(w), _prep(gout))


def available_backends() -> dict:
    """Map backend name -> module, for tests and the benchmark script."""
    out = {"python": kernels_py}
    if _kernels is not None:
        out["cython"] = _kernels
    return out

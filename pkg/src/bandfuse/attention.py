"""Dual attention branches, mask fusion, and mask application.

The HSI branch runs a shared 4-layer FC stack over each pixel's spectral
vector (B -> h1 -> h2 -> h3 -> B, ELU between, sigmoid last), producing a
per-pixel per-band mask. The LiDAR branch runs one 4-layer FC stack over
the flattened spatial patch (P -> ... -> P), so every output attends to
all P pixels. Fusion multiplies the LiDAR value into every band of the
HSI mask; an averaging variant exists for ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn.layers import Dense, Elu, Sequential, Sigmoid
from .rng import Xorshift64Star

FUSION_MODES = ("multiply", "add")


@dataclass(frozen=True)
class AttentionTensor:
    """Mask values indexed [sample][row][col][band]; lidar masks have band extent 1."""

    values: np.ndarray
    kind: str  # hsi | lidar | fused

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise ValueError("AttentionTensor values must be (n, rows, cols, bands)")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("attention values must lie in [0, 1]")
        if self.kind not in ("hsi", "lidar", "fused"):
            raise ValueError(f"unknown attention kind {self.kind!r}")
        if self.kind == "lidar" and v.shape[3] != 1:
            raise ValueError("lidar attention must have band extent 1")
        object.__setattr__(self, "values", v)


@dataclass
class AttentionNetConfig:
    hsi_hidden: tuple | None = None  # defaults to (B, B, B)
    lidar_hidden: tuple | None = None  # defaults to (P, P, P)
    fusion: str = "multiply"
    seed: int = 0

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}")
        for widths in (self.hsi_hidden, self.lidar_hidden):
            if widths is not None and (len(widths) != 3 or min(widths) < 1):
                raise ValueError("hidden widths must be 3 positive integers")


def _fc_stack(widths: list, rng: Xorshift64Star, name: str) -> Sequential:
    layers = []
    for i in range(len(widths) - 1):
        layers.append(Dense(widths[i], widths[i + 1], rng, name=f"{name}{i}"))
        layers.append(Elu() if i < len(widths) - 2 else Sigmoid())
    return Sequential(layers)


class DualAttention:
    """Both attention branches, operating on flattened (n, P, B) patch spectra."""

    def __init__(self, bands: int, pixels: int, config: AttentionNetConfig,
                 rng: Xorshift64Star | None = None):
        rng = rng if rng is not None else Xorshift64Star(config.seed)
        hh = list(config.hsi_hidden or (bands, bands, bands))
        lh = list(config.lidar_hidden or (pixels, pixels, pixels))
        self.bands = bands
        self.pixels = pixels
        self.fusion = config.fusion
        self.hsi_net = _fc_stack([bands] + hh + [bands], rng, "att_hsi")
        self.lidar_net = _fc_stack([pixels] + lh + [pixels], rng, "att_lid")

    @property
    def layers(self) -> list:
        return self.hsi_net.layers + self.lidar_net.layers

    def params(self):
        return self.hsi_net.params() + self.lidar_net.params()

    def zero_grad(self):
        self.hsi_net.zero_grad()
        self.lidar_net.zero_grad()

    def forward_hsi(self, spectra: np.ndarray) -> np.ndarray:
        """(n, P, B) patch spectra -> (n, P, B) mask; weights shared across pixels."""
        n, p, b = spectra.shape
        if p != self.pixels or b != self.bands:
            raise ValueError(f"expected (n, {self.pixels}, {self.bands}), got {spectra.shape}")
        return self.hsi_net.forward(spectra.reshape(n * p, b)).reshape(n, p, b)

    def backward_hsi(self, grad: np.ndarray) -> None:
        n, p, b = grad.shape
        self.hsi_net.backward(grad.reshape(n * p, b))

    def forward_lidar(self, patches: np.ndarray) -> np.ndarray:
        """(n, P) flattened lidar patches -> (n, P) per-pixel attention."""
        if patches.shape[1] != self.pixels:
            raise ValueError(f"expected (n, {self.pixels}), got {patches.shape}")
        return self.lidar_net.forward(patches)

    def backward_lidar(self, grad: np.ndarray) -> None:
        self.lidar_net.backward(grad)


def fuse_mask_values(m_hsi: np.ndarray, m_lid: np.ndarray, mode: str = "multiply") -> np.ndarray:
    """Combine (..., B) HSI and (...,) LiDAR mask values, broadcasting over bands."""
    lid = m_lid[..., np.newaxis]
    if mode == "multiply":
        return m_hsi * lid
    if mode == "add":
        return 0.5 * (m_hsi + lid)
    raise ValueError(f"unknown fusion mode {mode!r}")


def fuse_masks(m_hsi: AttentionTensor, m_lid: AttentionTensor,
               mode: str = "multiply") -> AttentionTensor:
    if m_hsi.kind != "hsi" or m_lid.kind != "lidar":
        raise ValueError("fuse_masks expects an hsi tensor and a lidar tensor")
    if m_hsi.values.shape[:3] != m_lid.values.shape[:3]:
        raise ValueError("sample/spatial dimensions must match")
    fused = fuse_mask_values(m_hsi.values, m_lid.values[..., 0], mode)
    return AttentionTensor(fused, "fused")


def apply_mask(patches: np.ndarray, fused: AttentionTensor) -> np.ndarray:
    """Elementwise product of (n, p, p, B) patches with the fused mask."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.shape != fused.values.shape:
        raise ValueError(f"patch shape {patches.shape} != mask shape {fused.values.shape}")
    return patches * fused.values

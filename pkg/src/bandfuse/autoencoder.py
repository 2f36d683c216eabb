"""Convolutional autoencoder over masked patches and its training objective.

The objective is 0.5 * ||recon - target||_2^2 + lambda * l21(fused mask),
where the target is the unmasked normalized HSI patch and the mask enters
only inside the network. Gradients flow through the autoencoder and both
attention branches.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionNetConfig, AttentionTensor, DualAttention, fuse_mask_values
from .nn.layers import (
    Conv3x3,
    Elu,
    MaxPool2x2,
    NearestResize,
    Sequential,
    SgdConfig,
    TrainingError,
    Upsample2x,
    sgd_step,
)
from .nn import checkpoint as ckpt
from .rasters import PatchSet
from .rng import Xorshift64Star


@dataclass
class AutoencoderConfig:
    channels: tuple = (64, 32)
    lam: float = 1e-3
    patch_size: int = 7

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if len(self.channels) != 2 or min(self.channels) < 1:
            raise ValueError("channels must be two positive integers")
        if self.patch_size < 4:
            raise ValueError("patch_size must be >= 4 (two rounds of 2x2 pooling)")


@dataclass
class TrainReport:
    loss: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    sparsity: list = field(default_factory=list)
    seconds: float = 0.0
    final_masks: AttentionTensor | None = None

    @property
    def epochs(self) -> int:
        return len(self.loss)

    def to_json_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "loss": self.loss,
            "recon": self.recon,
            "sparsity": self.sparsity,
            "seconds": self.seconds,
        }


def build_autoencoder(bands: int, patch_size: int, channels: tuple,
                      rng: Xorshift64Star) -> Sequential:
    """Two conv+pool encoder stages mirrored by two upsample+conv decoder stages.

    Floor pooling shrinks odd sizes (7 -> 3 -> 1); the decoder upsamples by
    2x twice and then nearest-neighbor-resizes to the exact patch size
    before the final convolution.
    """
    c1, c2 = channels
    return Sequential([
        Conv3x3(bands, c1, rng, name="enc1"),
        Elu(),
        MaxPool2x2(),
        Conv3x3(c1, c2, rng, name="enc2"),
        Elu(),
        MaxPool2x2(),
        Upsample2x(),
        Conv3x3(c2, c1, rng, name="dec1"),
        Elu(),
        Upsample2x(),
        NearestResize(patch_size, patch_size),
        Conv3x3(c1, bands, rng, name="dec2"),
        Elu(),
    ])


class FusedMaskAutoencoder:
    """Dual attention plus convolutional autoencoder, trained jointly."""

    def __init__(self, bands: int, patch_size: int, ae_config: AutoencoderConfig,
                 att_config: AttentionNetConfig, seed: int = 0):
        if ae_config.patch_size != patch_size:
            ae_config = AutoencoderConfig(ae_config.channels, ae_config.lam, patch_size)
        rng = Xorshift64Star(seed)
        self.bands = bands
        self.patch_size = patch_size
        self.pixels = patch_size * patch_size
        self.fusion = att_config.fusion
        self.attention = DualAttention(bands, self.pixels, att_config, rng)
        self.ae = build_autoencoder(bands, patch_size, ae_config.channels, rng)

    @property
    def layers(self) -> list:
        return self.attention.layers + self.ae.layers

    def params(self):
        return self.attention.params() + self.ae.params()

    def zero_grad(self):
        self.attention.zero_grad()
        self.ae.zero_grad()

    def save(self, path) -> None:
        ckpt.save_checkpoint(self.layers, path)

    def load(self, path) -> None:
        ckpt.load_checkpoint(self.layers, path)

    def forward_masks(self, hsi_patches: np.ndarray, lidar_patches: np.ndarray):
        """Return (m_hsi, m_lid, fused) as flattened (n, P[, B]) arrays."""
        n, p = hsi_patches.shape[0], self.patch_size
        spectra = hsi_patches.reshape(n, self.pixels, self.bands)
        lid = lidar_patches.reshape(n, self.pixels)
        m_hsi = self.attention.forward_hsi(spectra)
        m_lid = self.attention.forward_lidar(lid)
        fused = fuse_mask_values(m_hsi, m_lid, self.fusion)
        return spectra, m_hsi, m_lid, fused

    def forward(self, hsi_patches: np.ndarray, lidar_patches: np.ndarray):
        """Full forward pass; returns a cache dict for loss and backward."""
        n, p = hsi_patches.shape[0], self.patch_size
        spectra, m_hsi, m_lid, fused = self.forward_masks(hsi_patches, lidar_patches)
        masked = spectra * fused
        ae_in = np.ascontiguousarray(
            masked.reshape(n, p, p, self.bands).transpose(0, 3, 1, 2))
        recon = self.ae.forward(ae_in)
        target = np.ascontiguousarray(
            spectra.reshape(n, p, p, self.bands).transpose(0, 3, 1, 2))
        return {
            "spectra": spectra, "m_hsi": m_hsi, "m_lid": m_lid,
            "fused": fused, "recon": recon, "target": target,
        }


def l21_norm(m: np.ndarray) -> float:
    """sqrt of the sum over rows of squared L1 row norms."""
    row_l1 = np.abs(m).sum(axis=1)
    return float(np.sqrt(np.sum(row_l1 * row_l1)))


def l21_grad(m: np.ndarray) -> np.ndarray:
    """Gradient of l21_norm; subgradient of |.| at 0 taken as 0."""
    row_l1 = np.abs(m).sum(axis=1)
    norm = np.sqrt(np.sum(row_l1 * row_l1))
    if norm == 0.0:
        return np.zeros_like(m)
    return np.sign(m) * (row_l1 / norm)[:, np.newaxis]


def _batch_l21(m: np.ndarray) -> float:
    """Sum of per-sample l21 norms for a (n, rows, cols) mask stack.

    Applying the norm per sample keeps the regularization pressure
    independent of batch size; the norm of a concatenated matrix grows
    sublinearly in the row count, which would dilute lambda for large
    batches.
    """
    row_l1 = np.abs(m).sum(axis=2)
    return float(np.sqrt(np.sum(row_l1 * row_l1, axis=1)).sum())


def _batch_l21_grad(m: np.ndarray) -> np.ndarray:
    row_l1 = np.abs(m).sum(axis=2)
    norms = np.sqrt(np.sum(row_l1 * row_l1, axis=1))
    scale = np.zeros_like(row_l1)
    ok = norms > 0.0
    scale[ok] = row_l1[ok] / norms[ok, np.newaxis]
    return np.sign(m) * scale[:, :, np.newaxis]


def loss_terms(recon: np.ndarray, target: np.ndarray, m_fused: np.ndarray,
               lam: float):
    """(total, recon_term, sparsity_term); total = recon + lam * sparsity exactly.

    A 2-D mask is treated as a single sample; a 3-D stack contributes the
    sum of per-sample l21 norms.
    """
    diff = recon - target
    recon_term = 0.5 * float(np.sum(diff * diff))
    if m_fused.ndim == 2:
        sparsity = l21_norm(m_fused)
    else:
        sparsity = _batch_l21(m_fused)
    return recon_term + lam * sparsity, recon_term, sparsity


def loss_and_grads(model: FusedMaskAutoencoder, hsi_patches: np.ndarray,
                   lidar_patches: np.ndarray, lam: float, scale: float = 1.0):
    """Forward, Eq-style loss, and backprop into all parameter grads.

    ``scale`` multiplies the gradient only (the returned loss terms are
    unscaled), letting the trainer step on the per-sample mean.
    """
    cache = model.forward(hsi_patches, lidar_patches)
    total, recon_term, sparsity = loss_terms(
        cache["recon"], cache["target"], cache["fused"], lam)

    n, p, b = hsi_patches.shape[0], model.patch_size, model.bands
    g_recon = scale * (cache["recon"] - cache["target"])
    g_ae_in = model.ae.backward(g_recon)
    g_masked = g_ae_in.transpose(0, 2, 3, 1).reshape(n, model.pixels, b)
    g_fused = g_masked * cache["spectra"]
    if lam > 0:
        g_fused = g_fused + scale * lam * _batch_l21_grad(cache["fused"])
    if model.fusion == "multiply":
        g_mhsi = g_fused * cache["m_lid"][:, :, np.newaxis]
        g_mlid = (g_fused * cache["m_hsi"]).sum(axis=2)
    else:  # add
        g_mhsi = 0.5 * g_fused
        g_mlid = 0.5 * g_fused.sum(axis=2)
    model.attention.backward_hsi(g_mhsi)
    model.attention.backward_lidar(g_mlid)
    return total, recon_term, sparsity


def compute_masks(model: FusedMaskAutoencoder, patches: PatchSet,
                  batch_size: int = 256) -> AttentionTensor:
    """Fused masks for a whole PatchSet with frozen parameters."""
    p = model.patch_size
    chunks = []
    for start in range(0, patches.count, batch_size):
        hsi = patches.hsi_patches[start:start + batch_size]
        lid = patches.lidar_patches[start:start + batch_size]
        _, _, _, fused = model.forward_masks(hsi, lid)
        chunks.append(fused.reshape(-1, p, p, model.bands))
    return AttentionTensor(np.concatenate(chunks, axis=0), "fused")


def train(patches: PatchSet, ae_config: AutoencoderConfig,
          att_config: AttentionNetConfig, sgd_config: SgdConfig):
    """Minibatch SGD over shuffled samples; returns (model, TrainReport)."""
    start_time = time.perf_counter()
    bands, p = patches.bands, patches.patch_size
    model = FusedMaskAutoencoder(bands, p, ae_config, att_config, seed=sgd_config.seed)
    shuffle_rng = Xorshift64Star(sgd_config.seed ^ 0x5EEDED)
    n = patches.count
    report = TrainReport()
    order = list(range(n))
    for epoch in range(sgd_config.epochs):
        shuffle_rng.shuffle(order)
        totals = recons = spars = 0.0
        for step, start in enumerate(range(0, n, sgd_config.batch_size)):
            idx = order[start:start + sgd_config.batch_size]
            hsi = patches.hsi_patches[idx]
            lid = patches.lidar_patches[idx]
            model.zero_grad()
            # batch gradient is the sum of per-sample gradients
            total, recon_term, sparsity = loss_and_grads(
                model, hsi, lid, ae_config.lam, scale=1.0)
            if not np.isfinite(total):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            sgd_step(model.params(), sgd_config.learning_rate)
            totals += total
            recons += recon_term
            spars += sparsity
        report.loss.append(totals / n)
        report.recon.append(recons / n)
        report.sparsity.append(spars / n)
    report.final_masks = compute_masks(model, patches)
    report.seconds = time.perf_counter() - start_time
    return model, report

"""Deterministic synthetic HSI + LiDAR fixture with planted informative bands.

All randomness flows through one xorshift64* stream in a fixed order:
class signatures (with bounded retries), the shuffle assigning band
roles, affine slopes, then pixel noise band by band in row-major order,
then LiDAR noise. Identical seeds therefore give identical rasters on any
platform.

Band roles: ``k_true`` informative bands carry per-class spectral
signatures. A round(redundancy * rest) subset of the remaining bands are
affine copies of informative bands (slope in [0.5, 2], shrunk if needed
so the noiseless copy stays inside [0, 1]); when redundancy is positive
every informative band receives at least one copy while room allows. The
rest are near-constant pure noise at 0.5. LiDAR is a per-class height
plus noise; heights repeat across classes so elevation alone cannot
separate them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .rasters import HsiCube, LabelMap, LidarRaster
from .rng import Xorshift64Star

_SIGNATURE_LO, _SIGNATURE_HI = 0.15, 0.85
_MAX_SIGNATURE_TRIES = 2000
_MAX_COLUMN_CORR = 0.3
_MIN_COLUMN_STD = 0.1


@dataclass
class SynthSpec:
    height: int = 32
    width: int = 32
    bands: int = 12
    k_true: int = 3
    class_count: int = 4
    sigma: float = 0.02
    redundancy: float = 0.5  # fraction of non-informative bands that copy a source
    seed: int = 0
    informative: tuple | None = None  # defaults to evenly spaced indices

    def __post_init__(self):
        if self.k_true > self.bands:
            raise ValueError("k_true cannot exceed the band count")
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0.0 <= self.redundancy <= 1.0:
            raise ValueError("redundancy must be in [0, 1]")
        if self.informative is None:
            self.informative = tuple(
                (i * self.bands) // self.k_true for i in range(self.k_true))
        self.informative = tuple(sorted(self.informative))
        if len(set(self.informative)) != self.k_true:
            raise ValueError("informative band indices must be distinct, k_true of them")
        if any(not 0 <= b < self.bands for b in self.informative):
            raise ValueError("informative band index out of range")


@dataclass(frozen=True)
class SynthTruth:
    informative: tuple  # informative band indices
    signatures: np.ndarray  # (C, k_true)
    lidar_heights: tuple  # C values
    redundant_sources: dict  # band index -> informative band it copies
    noise_bands: tuple

    def family(self, band: int) -> tuple:
        """The informative band plus every redundant copy of it."""
        return tuple(sorted([band] + [
            b for b, src in self.redundant_sources.items() if src == band]))

    def to_json_dict(self) -> dict:
        return {
            "informative": list(self.informative),
            "signatures": self.signatures.tolist(),
            "lidar_heights": list(self.lidar_heights),
            "redundant_sources": {str(k): v for k, v in self.redundant_sources.items()},
            "noise_bands": list(self.noise_bands),
        }


def truth_from_json_dict(d: dict) -> SynthTruth:
    return SynthTruth(
        tuple(d["informative"]),
        np.asarray(d["signatures"], dtype=np.float64),
        tuple(d["lidar_heights"]),
        {int(k): int(v) for k, v in d["redundant_sources"].items()},
        tuple(d["noise_bands"]),
    )


def _class_grid(height: int, width: int, class_count: int) -> np.ndarray:
    """Rectangular class regions tiling the raster, classes 1..C."""
    grid_rows = max(1, int(math.floor(math.sqrt(class_count))))
    grid_cols = int(math.ceil(class_count / grid_rows))
    row_cell = (np.arange(height) * grid_rows) // height
    col_cell = (np.arange(width) * grid_cols) // width
    cell = row_cell[:, None] * grid_cols + col_cell[None, :]
    return (cell % class_count) + 1


def _draw_signatures(rng: Xorshift64Star, class_count: int, k_true: int,
                     sigma: float) -> np.ndarray:
    """Class signatures with separated rows and decorrelated columns.

    Rows (classes) must be at least max(4*sigma, 0.1) apart in L2 so classes
    stay distinguishable under noise. Columns (bands) must each vary across
    classes and be pairwise weakly correlated, so different planted bands
    carry genuinely different information.
    """
    min_gap = max(4.0 * sigma, 0.1)
    for _ in range(_MAX_SIGNATURE_TRIES):
        sig = np.array([
            [rng.uniform(_SIGNATURE_LO, _SIGNATURE_HI) for _ in range(k_true)]
            for _ in range(class_count)
        ])
        if any(
            np.linalg.norm(sig[a] - sig[b]) < min_gap
            for a in range(class_count) for b in range(a + 1, class_count)
        ):
            continue
        if np.any(sig.std(axis=0) < _MIN_COLUMN_STD):
            continue
        if k_true > 1 and class_count > 2:
            corr = np.corrcoef(sig.T)
            off = corr[~np.eye(k_true, dtype=bool)]
            if np.any(np.abs(off) > _MAX_COLUMN_CORR):
                continue
        return sig
    raise RuntimeError("could not draw class signatures with the required separation")


def _gauss_field(rng: Xorshift64Star, height: int, width: int, sigma: float) -> np.ndarray:
    if sigma == 0.0:
        return np.zeros((height, width))
    vals = np.array([rng.gauss() for _ in range(height * width)])
    return sigma * vals.reshape(height, width)


def generate(spec: SynthSpec):
    """Build (HsiCube, LidarRaster, LabelMap, SynthTruth) for the spec."""
    rng = Xorshift64Star(spec.seed)
    h, w, b = spec.height, spec.width, spec.bands
    class_map = _class_grid(h, w, spec.class_count)
    signatures = _draw_signatures(rng, spec.class_count, spec.k_true, spec.sigma)

    # repeat heights across classes so LiDAR alone is ambiguous
    n_levels = max(1, (spec.class_count + 1) // 2)
    levels = [0.2 + 0.6 * i / max(1, n_levels - 1) for i in range(n_levels)] \
        if n_levels > 1 else [0.5]
    heights = tuple(levels[c % n_levels] for c in range(spec.class_count))

    informative = set(spec.informative)
    others = [band for band in range(b) if band not in informative]
    n_red = round(spec.redundancy * len(others))
    if spec.redundancy > 0.0 and spec.k_true > 0:
        # every planted band gets at least one copy when there is room,
        # so no family's recovery hinges on a role lottery
        n_red = max(n_red, min(spec.k_true, len(others)))
    rng.shuffle(others)
    sources = list(spec.informative)
    rng.shuffle(sources)
    redundant_sources: dict = {}
    affine: dict = {}
    for i, band in enumerate(others[:n_red]):
        if i < len(sources):
            src = sources[i]
        else:
            src = spec.informative[rng.randbelow(spec.k_true)]
        redundant_sources[band] = src
        affine[band] = rng.uniform(0.5, 2.0)
    noise_bands = sorted(others[n_red:])

    # noiseless per-pixel signature values for each informative band
    clean = {}
    for j, band in enumerate(spec.informative):
        clean[band] = signatures[class_map - 1, j]

    data = np.empty((b, h, w))
    for band in range(b):
        if band in informative:
            base = clean[band]
        elif band in redundant_sources:
            src_clean = clean[redundant_sources[band]]
            lo, hi = float(src_clean.min()), float(src_clean.max())
            slope = affine[band]
            span = hi - lo
            if span > 0 and slope * span > 0.9:
                slope = 0.9 / span  # keep the noiseless copy inside [0, 1]
                affine[band] = slope
            intercept = 0.5 - slope * 0.5 * (lo + hi)
            base = slope * src_clean + intercept
        else:
            base = np.full((h, w), 0.5)
        data[band] = np.clip(base + _gauss_field(rng, h, w, spec.sigma), 0.0, 1.0)

    lidar_base = np.asarray(heights)[class_map - 1]
    lidar = np.clip(lidar_base + _gauss_field(rng, h, w, spec.sigma), 0.0, 1.0)

    entries = tuple(
        (r, c, int(class_map[r, c])) for r in range(h) for c in range(w))
    truth = SynthTruth(spec.informative, signatures, heights,
                       redundant_sources, tuple(noise_bands))
    return HsiCube(data), LidarRaster(lidar), LabelMap(entries, spec.class_count), truth


def oracle_check(selected_bands, truth: SynthTruth) -> float:
    """Fraction of informative bands recovered by the selection.

    An informative band counts as recovered when the selection contains the
    band itself or any redundant copy of it.
    """
    selected = set(int(b) for b in selected_bands)
    if not truth.informative:
        return 1.0
    hits = sum(1 for band in truth.informative
               if selected & set(truth.family(band)))
    return hits / len(truth.informative)


def random_selection_recovery(truth: SynthTruth, bands: int, k: int) -> float:
    """Expected oracle_check of a uniform-random k-subset, computed exactly."""
    total = math.comb(bands, k)
    expected = 0.0
    for band in truth.informative:
        m = len(truth.family(band))
        miss = math.comb(bands - m, k) / total if bands - m >= k else 0.0
        expected += 1.0 - miss
    return expected / len(truth.informative)

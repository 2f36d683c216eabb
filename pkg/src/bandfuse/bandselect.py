"""Band scoring and clustering-based selection.

Pipeline: aggregate fused masks into one score per band, min-max normalize,
build an attention distance (outer product) and a Pearson dissimilarity
distance, mix them with alpha + beta = 1, cluster agglomeratively, and pick
the highest-attention band inside each cluster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from .attention import AttentionTensor
from .rasters import HsiCube

LINKAGES = ("single", "complete", "average")


@dataclass(frozen=True)
class BandScores:
    raw: np.ndarray
    normalized: np.ndarray


@dataclass(frozen=True)
class DistanceMatrix:
    kind: str  # attention | dissimilarity | combined
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.array_equal(v, v.T):
            raise ValueError("distance matrix must be exactly symmetric")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Selection:
    bands: tuple  # k distinct band indices, ascending
    clusters: tuple  # length-B cluster assignment in [0, k)
    alpha: float
    beta: float
    k: int

    def to_json_dict(self, a_norm: np.ndarray) -> dict:
        return {
            "k": self.k,
            "alpha": self.alpha,
            "beta": self.beta,
            "bands": list(self.bands),
            "clusters": list(self.clusters),
            "a_norm": [float(v) for v in a_norm],
        }


def aggregate_attention(masks: AttentionTensor) -> np.ndarray:
    """Mean mask value over samples and pixels, one entry per band."""
    if masks.values.size == 0:
        raise ValueError("empty attention tensor")
    return masks.values.mean(axis=(0, 1, 2))


def normalize_attention(a: np.ndarray) -> np.ndarray:
    """Min-max normalize; an all-equal vector maps to zeros."""
    a = np.asarray(a, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi > lo:
        return (a - lo) / (hi - lo)
    return np.zeros_like(a)


def attention_distance(a_norm: np.ndarray) -> DistanceMatrix:
    """Outer product of the normalized attention vector."""
    a_norm = np.asarray(a_norm, dtype=np.float64)
    return DistanceMatrix("attention", np.outer(a_norm, a_norm))


def dissimilarity(cube: HsiCube) -> DistanceMatrix:
    """1 - Pearson correlation between bands over all pixels.

    Constant bands correlate 0 against everything (distance 1), except on
    the diagonal, which is 0 exactly.
    """
    b = cube.bands
    if b < 2:
        raise ValueError("dissimilarity needs at least 2 bands")
    flat = cube.data.reshape(b, -1)
    centered = flat - flat.mean(axis=1, keepdims=True)
    std = np.sqrt((centered * centered).sum(axis=1))
    corr = np.zeros((b, b))
    ok = std > 0
    if ok.any():
        unit = np.zeros_like(centered)
        unit[ok] = centered[ok] / std[ok, np.newaxis]
        corr[np.ix_(ok, ok)] = unit[ok] @ unit[ok].T
    d = 1.0 - corr
    np.fill_diagonal(d, 0.0)
    d = np.clip(d, 0.0, 2.0)
    d = 0.5 * (d + d.T)  # exact symmetry despite float matmul
    return DistanceMatrix("dissimilarity", d)


def combined_distance(d_att: DistanceMatrix, d_dis: DistanceMatrix,
                      alpha: float, beta: float) -> DistanceMatrix:
    if alpha < 0 or beta < 0 or abs(alpha + beta - 1.0) > 1e-9:
        raise ValueError(f"alpha and beta must be non-negative and sum to 1, got {alpha}, {beta}")
    if d_att.values.shape != d_dis.values.shape:
        raise ValueError("distance matrix dimensions must match")
    return DistanceMatrix("combined", alpha * d_att.values + beta * d_dis.values)


def _cut_at_k(z: np.ndarray, b: int, k: int) -> np.ndarray:
    """Cluster labels after the first b-k merges of a scipy linkage matrix."""
    parent = list(range(2 * b - 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for m in range(b - k):
        a, c = int(z[m, 0]), int(z[m, 1])
        node = b + m
        parent[find(a)] = node
        parent[find(c)] = node
    roots = {}
    labels = np.empty(b, dtype=int)
    for i in range(b):
        r = find(i)
        if r not in roots:
            roots[r] = len(roots)
        labels[i] = roots[r]
    return labels


def select_bands(d_comb: DistanceMatrix, a_norm: np.ndarray, k: int,
                 method: str = "average", alpha: float = float("nan"),
                 beta: float = float("nan")) -> Selection:
    """Agglomerative clustering cut at k clusters, then per-cluster argmax.

    Ties in the argmax go to the lowest band index; returned indices are
    sorted ascending. Cluster ids are relabelled so that band order is
    deterministic across runs.
    """
    b = d_comb.values.shape[0]
    if not 1 <= k <= b:
        raise ValueError(f"k must be in [1, {b}], got {k}")
    if method not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    a_norm = np.asarray(a_norm, dtype=np.float64)
    if a_norm.shape != (b,):
        raise ValueError("a_norm length must match the distance matrix")
    if k == b:
        labels = np.arange(b)
    else:
        condensed = squareform(d_comb.values, checks=False)
        z = linkage(condensed, method=method)
        labels = _cut_at_k(z, b, k)
    selected = []
    for cluster in range(labels.max() + 1):
        members = np.flatnonzero(labels == cluster)
        best = members[np.argmax(a_norm[members])]  # argmax takes first on ties
        selected.append(int(best))
    return Selection(tuple(sorted(selected)), tuple(int(v) for v in labels),
                     alpha, beta, k)


def dump_distance_csv(matrix: DistanceMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in matrix.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")

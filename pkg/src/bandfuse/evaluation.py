"""Classification harness: per-pixel features, stratified split, KNN, metrics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .bandselect import DistanceMatrix, combined_distance, attention_distance, select_bands
from .rasters import HsiCube, LabelMap, LidarRaster, normalize_lidar, normalize_per_band
from .rng import Xorshift64Star


class SplitError(ValueError):
    """A class has too few samples to stratify."""


@dataclass(frozen=True)
class FeatureTable:
    features: np.ndarray  # (rows, k+1): selected band values then lidar
    labels: np.ndarray  # (rows,), 1-based class ids

    @property
    def count(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class EvalReport:
    oa: float
    aa: float
    kappa: float
    per_class: tuple
    confusion: np.ndarray  # (C, C), rows = true class, cols = predicted
    seed: int
    k_bands: int

    def to_json_dict(self) -> dict:
        return {
            "oa": self.oa,
            "aa": self.aa,
            "kappa": self.kappa,
            "per_class": list(self.per_class),
            "confusion": self.confusion.tolist(),
            "seed": self.seed,
            "k": self.k_bands,
        }


def build_features(cube: HsiCube, lidar: LidarRaster, labels: LabelMap,
                   bands) -> FeatureTable:
    """One row per labeled pixel: selected band values plus the LiDAR value.

    Values come from min-max normalized rasters.
    """
    bands = list(bands)
    if any(not 0 <= b < cube.bands for b in bands):
        raise ValueError("selected band index out of range")
    norm = normalize_per_band(cube).data
    lid = normalize_lidar(lidar).data
    rows = np.empty((len(labels.entries), len(bands) + 1))
    y = np.empty(len(labels.entries), dtype=int)
    for i, (r, c, cls) in enumerate(labels.entries):
        rows[i, :-1] = norm[bands, r, c]
        rows[i, -1] = lid[r, c]
        y[i] = cls
    return FeatureTable(rows, y)


def split(table: FeatureTable, train_fraction: float, seed: int):
    """Seeded stratified split; every class keeps at least one training row."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = Xorshift64Star(seed)
    train_idx, test_idx = [], []
    for cls in sorted(set(int(v) for v in table.labels)):
        members = [int(i) for i in np.flatnonzero(table.labels == cls)]
        if len(members) < 2:
            raise SplitError(f"class {cls} has fewer than 2 samples")
        rng.shuffle(members)
        n_train = max(1, int(train_fraction * len(members)))
        train_idx.extend(members[:n_train])
        test_idx.extend(members[n_train:])
    train_idx.sort()
    test_idx.sort()
    return (
        FeatureTable(table.features[train_idx], table.labels[train_idx]),
        FeatureTable(table.features[test_idx], table.labels[test_idx]),
    )


def knn_classify(train: FeatureTable, test: FeatureTable, k_neighbors: int = 5) -> np.ndarray:
    """Euclidean KNN with deterministic ties.

    Distance ties prefer the lower training-row index; vote ties prefer the
    smallest class id among the tied classes.
    """
    if train.count == 0:
        raise ValueError("training table is empty")
    k = min(k_neighbors, train.count)
    preds = np.empty(test.count, dtype=int)
    tx = train.features
    for i in range(test.count):
        d2 = ((tx - test.features[i]) ** 2).sum(axis=1)
        # stable sort keeps lower row index first among equal distances
        nearest = np.argsort(d2, kind="stable")[:k]
        votes = Counter(int(train.labels[j]) for j in nearest)
        top = max(votes.values())
        preds[i] = min(cls for cls, v in votes.items() if v == top)
    return preds


def confusion_matrix(true_labels: np.ndarray, predicted: np.ndarray,
                     class_count: int) -> np.ndarray:
    conf = np.zeros((class_count, class_count), dtype=int)
    for t, p in zip(true_labels, predicted):
        conf[t - 1, p - 1] += 1
    return conf


def metrics(confusion: np.ndarray):
    """(oa, aa, kappa) from a confusion matrix with rows = true classes.

    AA averages per-class recall over classes that actually occur. When the
    chance agreement p_e is 1, kappa is 1 for a perfect classifier and 0
    otherwise.
    """
    conf = np.asarray(confusion, dtype=np.float64)
    total = conf.sum()
    if total <= 0:
        raise ValueError("confusion matrix has no samples")
    diag = np.diag(conf)
    oa = float(diag.sum() / total)
    rowsum = conf.sum(axis=1)
    colsum = conf.sum(axis=0)
    present = rowsum > 0
    aa = float((diag[present] / rowsum[present]).mean())
    p_e = float((rowsum * colsum).sum() / (total * total))
    if p_e == 1.0:
        kappa = 1.0 if oa == 1.0 else 0.0
    else:
        kappa = (oa - p_e) / (1.0 - p_e)
    return oa, aa, float(kappa)


def evaluate_bands(cube: HsiCube, lidar: LidarRaster, labels: LabelMap, bands,
                   train_fraction: float = 0.5, knn_k: int = 5,
                   seed: int = 0) -> EvalReport:
    """End-to-end evaluation of one band subset."""
    table = build_features(cube, lidar, labels, bands)
    train, test = split(table, train_fraction, seed)
    preds = knn_classify(train, test, knn_k)
    conf = confusion_matrix(test.labels, preds, labels.class_count)
    oa, aa, kappa = metrics(conf)
    per_class = tuple(
        float(conf[c, c] / conf[c].sum()) if conf[c].sum() else 0.0
        for c in range(labels.class_count)
    )
    return EvalReport(oa, aa, kappa, per_class, conf, seed, len(list(bands)))


def sweep_ks(bands: int, lo: int = 1, hi: int = 50, step: int = 5) -> list:
    """k = 1, 5, 10, ... capped at the band count, with a terminal k = B row."""
    ks = [lo] + list(range(step, hi + 1, step))
    ks = [k for k in ks if k <= bands]
    if ks[-1] != bands:
        ks.append(bands)
    return ks


def sweep(cube: HsiCube, lidar: LidarRaster, labels: LabelMap,
          a_norm: np.ndarray, d_dis: DistanceMatrix, alpha: float, beta: float,
          linkage_method: str = "average", train_fraction: float = 0.5,
          knn_k: int = 5, seed: int = 0, ks=None) -> list:
    """Re-select and evaluate for each k, reusing one trained attention."""
    d_att = attention_distance(a_norm)
    d_comb = combined_distance(d_att, d_dis, alpha, beta)
    if ks is None:
        ks = sweep_ks(cube.bands)
    out = []
    for k in ks:
        sel = select_bands(d_comb, a_norm, k, linkage_method, alpha, beta)
        out.append((k, sel, evaluate_bands(cube, lidar, labels, sel.bands,
                                           train_fraction, knn_k, seed)))
    return out


def sweep_csv_lines(results) -> list:
    lines = ["k,oa,aa,kappa"]
    for k, _sel, report in results:
        lines.append(f"{k},{report.oa!r},{report.aa!r},{report.kappa!r}")
    return lines

"""End-to-end acceptance gate.

Each test covers one numbered release criterion and prints a single
PASS/FAIL line (visible even under pytest output capture). The fixture
trainings are shared across tests through module-scoped fixtures, so the
whole module runs in a few minutes single-threaded.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from bandfuse import bandselect
from bandfuse.attention import AttentionNetConfig
from bandfuse.autoencoder import (
    AutoencoderConfig,
    FusedMaskAutoencoder,
    loss_and_grads,
    loss_terms,
    train,
)
from bandfuse.cli import main as cli_main
from bandfuse.evaluation import evaluate_bands, knn_classify, metrics, sweep, sweep_ks
from bandfuse.evaluation import FeatureTable
from bandfuse.nn.layers import SgdConfig, Sequential, finite_diff_check
from bandfuse.rasters import extract_patches, normalize_lidar, normalize_per_band
from bandfuse.synth import (
    SynthSpec,
    generate,
    oracle_check,
    random_selection_recovery,
)


def _report(capsys, num, ok, detail):
    with capsys.disabled():
        print(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")


def _prepared(seed):
    cube, lidar, labels, truth = generate(SynthSpec(seed=seed))
    cn = normalize_per_band(cube)
    ln = normalize_lidar(lidar)
    patches = extract_patches(cn, ln, 7, 1)
    return cube, lidar, labels, truth, cn, ln, patches


def _select3(cn, masks):
    a_norm = bandselect.normalize_attention(bandselect.aggregate_attention(masks))
    d_comb = bandselect.combined_distance(
        bandselect.attention_distance(a_norm), bandselect.dissimilarity(cn), 0.5, 0.5)
    return a_norm, bandselect.select_bands(d_comb, a_norm, 3, alpha=0.5, beta=0.5)


@pytest.fixture(scope="module")
def fixture42():
    return _prepared(42)


@pytest.fixture(scope="module")
def trained42(fixture42):
    """Default-config training on the main fixture, with wall time."""
    _cube, _lidar, _labels, _truth, _cn, _ln, patches = fixture42
    start = time.perf_counter()
    model, report = train(patches, AutoencoderConfig(), AttentionNetConfig(),
                          SgdConfig())
    return model, report, time.perf_counter() - start


def test_criterion_1_gradient_integrity(capsys):
    start = time.perf_counter()
    bands, p, n = 3, 4, 2
    model = FusedMaskAutoencoder(
        bands, p, AutoencoderConfig(channels=(4, 3), lam=0.1, patch_size=p),
        AttentionNetConfig(), seed=1)
    rng = np.random.default_rng(101)
    hsi = rng.random((n, p, p, bands))
    lid = rng.random((n, p, p))
    # eps balances FD truncation against roundoff on the tiniest gradients
    lam, eps = 0.1, 1e-4

    model.zero_grad()
    loss_and_grads(model, hsi, lid, lam)
    worst = 0.0
    for param in model.params():
        flat = param.value.reshape(-1)
        g = param.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            c = model.forward(hsi, lid)
            lp = loss_terms(c["recon"], c["target"], c["fused"], lam)[0]
            flat[i] = orig - eps
            c = model.forward(hsi, lid)
            lm = loss_terms(c["recon"], c["target"], c["fused"], lam)[0]
            flat[i] = orig
            num = (lp - lm) / (2 * eps)
            worst = max(worst, abs(g[i] - num) / max(1e-8, abs(g[i]) + abs(num)))

    per_layer = 0.0
    frag_rng = np.random.default_rng(7)
    for layer in model.layers:
        if not layer.params():
            continue
        frag = Sequential([layer])
        shape = ((2, layer.w.value.shape[1])
                 if layer.kind == "dense"
                 else (1, layer.w.value.shape[1], 4, 4))
        x = frag_rng.random(shape) + 0.1
        per_layer = max(per_layer, finite_diff_check(frag, x))

    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and per_layer < 1e-6 and elapsed < 30.0
    _report(capsys, 1, ok,
            f"end-to-end rel err {worst:.2e} (<1e-5), per-layer {per_layer:.2e} "
            f"(<1e-6), {elapsed:.1f}s (<30s)")
    assert ok


def test_criterion_2_training_descent(trained42, capsys):
    _model, report, seconds = trained42
    ok = (report.epochs == 50
          and report.loss[-1] < 0.5 * report.loss[0]
          and seconds < 300.0)
    _report(capsys, 2, ok,
            f"loss {report.loss[0]:.2f} -> {report.loss[-1]:.2f} "
            f"(need < {0.5 * report.loss[0]:.2f}), {seconds:.0f}s (<300s)")
    assert ok


def test_criterion_3_sparsity_pressure(fixture42, trained42, capsys):
    _cube, _lidar, _labels, _truth, _cn, _ln, patches = fixture42
    means = {}
    for lam in (0.0, 1e-2, 10.0):
        _m, report = train(patches, AutoencoderConfig(lam=lam),
                           AttentionNetConfig(), SgdConfig())
        means[lam] = float(report.final_masks.values.mean())
    drop = (means[0.0] - means[1e-2]) / means[0.0]
    ok = means[1e-2] < means[0.0] and drop >= 0.05 and means[10.0] < 0.5 * means[0.0]
    _report(capsys, 3, ok,
            f"mean mask {means[0.0]:.4f} (l=0) vs {means[1e-2]:.4f} (l=1e-2), "
            f"drop {drop * 100:.1f}% (>=5%); l=10 mask {means[10.0]:.1e} "
            f"(<0.5x l=0)")
    assert ok


def test_criterion_4_planted_band_recovery(capsys):
    recoveries = []
    beats = 0
    for seed in (1, 2, 3, 4, 5):
        _cube, _lidar, _labels, truth, cn, _ln, patches = _prepared(seed)
        _model, report = train(patches, AutoencoderConfig(),
                               AttentionNetConfig(), SgdConfig())
        _a_norm, sel = _select3(cn, report.final_masks)
        rec = oracle_check(sel.bands, truth)
        expected = random_selection_recovery(truth, 12, 3)
        recoveries.append(rec)
        if rec > expected:
            beats += 1
    mean_rec = sum(recoveries) / len(recoveries)
    ok = mean_rec >= 0.8 - 1e-12 and beats >= 4
    _report(capsys, 4, ok,
            f"mean recovery {mean_rec:.3f} (>=0.8) over seeds 1-5, "
            f"beats analytic random baseline on {beats}/5 (>=4)")
    assert ok


def test_criterion_5_downstream_accuracy(fixture42, trained42, capsys):
    cube, lidar, labels, truth, cn, _ln, _patches = fixture42
    _model, report, _seconds = trained42
    _a_norm, sel = _select3(cn, report.final_masks)
    selected = evaluate_bands(cube, lidar, labels, sel.bands, 0.5, 5, 0)
    noise = evaluate_bands(cube, lidar, labels, truth.noise_bands[:3], 0.5, 5, 0)
    ok = selected.oa >= 0.90 and noise.oa <= 0.75
    _report(capsys, 5, ok,
            f"OA {selected.oa:.3f} with selected bands {sel.bands} (>=0.90) vs "
            f"{noise.oa:.3f} with 3 pure-noise bands (<=0.75)")
    assert ok


def test_criterion_6_scoring_math_oracles(capsys):
    tol = 1e-12
    ok = True
    # aggregation / normalization / distances against hand arithmetic
    from bandfuse.attention import AttentionTensor
    two = AttentionTensor(np.array([[[[0.2, 0.3]]], [[[0.6, 0.5]]]]), "fused")
    ok &= np.allclose(bandselect.aggregate_attention(two), [0.4, 0.4], atol=tol)
    ok &= np.allclose(bandselect.normalize_attention([0.2, 0.5, 0.8]),
                      [0.0, 0.5, 1.0], atol=tol)
    d_att = bandselect.attention_distance([0.0, 0.5, 1.0]).values
    ok &= abs(d_att[1, 2] - 0.5) < tol and abs(d_att[0, 1]) < tol
    from bandfuse.rasters import HsiCube
    hand = HsiCube(np.array([[1.0, 2.0, 3.0], [1.0, 3.0, 2.0]]).reshape(2, 1, 3))
    ok &= abs(bandselect.dissimilarity(hand).values[0, 1] - 0.5) < tol
    half = bandselect.DistanceMatrix("attention", np.full((2, 2), 0.5))
    other = bandselect.DistanceMatrix("dissimilarity", np.full((2, 2), 0.5))
    comb = bandselect.combined_distance(half, other, 0.5, 0.5).values
    ok &= abs(comb[0, 1] - 0.5) < tol
    hand_ok = ok

    # 1000-instance property suite, B <= 16
    rng = np.random.default_rng(0)
    prop_ok = True
    for _ in range(1000):
        b = int(rng.integers(2, 17))
        a_norm = bandselect.normalize_attention(rng.random(b))
        cube = HsiCube(rng.random((b, 3, 3)))
        da = bandselect.attention_distance(a_norm).values
        dd = bandselect.dissimilarity(cube).values
        dc = bandselect.combined_distance(
            bandselect.attention_distance(a_norm), bandselect.dissimilarity(cube),
            0.4, 0.6).values
        prop_ok &= np.array_equal(da, da.T) and np.array_equal(dd, dd.T)
        prop_ok &= np.array_equal(dc, dc.T)
        prop_ok &= 0.0 <= da.min() and da.max() <= 1.0
        prop_ok &= 0.0 <= dd.min() and dd.max() <= 2.0
        prop_ok &= np.all(np.diag(dd) == 0.0) and dc.min() >= 0.0
        if not prop_ok:
            break
    ok = hand_ok and prop_ok
    _report(capsys, 6, ok,
            f"hand-computed scoring examples at 1e-12: "
            f"{'ok' if hand_ok else 'FAILED'}; symmetry/range over 1000 random "
            f"instances (B<=16): {'ok' if prop_ok else 'FAILED'}")
    assert ok


def test_criterion_7_metric_oracles(capsys):
    tol = 1e-12
    oa, aa, kappa = metrics(np.array([[3, 1], [0, 4]]))
    hand_ok = (abs(oa - 7 / 8) < tol and abs(aa - 0.875) < tol
               and abs(kappa - 0.75) < tol)
    oa, aa, kappa = metrics(np.array([[1, 1], [1, 1]]))
    hand_ok &= abs(oa - 0.5) < tol and abs(kappa) < tol
    oa, aa, kappa = metrics(np.array([[2, 0], [0, 2]]))
    hand_ok &= oa == 1.0 and aa == 1.0 and kappa == 1.0

    rng = np.random.default_rng(1)
    knn_ok = True
    for _ in range(50):
        n_train = int(rng.integers(3, 60))
        n_test = int(rng.integers(1, 30))
        feats = int(rng.integers(1, 6))
        train_t = FeatureTable(rng.random((n_train, feats)),
                               rng.integers(1, 5, size=n_train))
        test_t = FeatureTable(rng.random((n_test, feats)),
                              rng.integers(1, 5, size=n_test))
        got = knn_classify(train_t, test_t, 5)
        want = []
        for i in range(n_test):
            order = sorted(
                range(n_train),
                key=lambda j: (float(((train_t.features[j] - test_t.features[i]) ** 2).sum()), j))
            near = order[:min(5, n_train)]
            counts = {}
            for j in near:
                counts[int(train_t.labels[j])] = counts.get(int(train_t.labels[j]), 0) + 1
            top = max(counts.values())
            want.append(min(c for c, v in counts.items() if v == top))
        knn_ok &= np.array_equal(got, np.array(want))
        if not knn_ok:
            break
    ok = hand_ok and knn_ok
    _report(capsys, 7, ok,
            f"confusion metrics incl. kappa=0.75 at 1e-12: "
            f"{'ok' if hand_ok else 'FAILED'}; KNN vs brute force on 50 "
            f"instances: {'ok' if knn_ok else 'FAILED'}")
    assert ok


def test_criterion_8_pipeline_determinism(tmp_path, capsys):
    args = ["--train.epochs", "2", "--select.k", "3"]
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli_main(["pipeline", "--out", str(out)] + args) == 0
    same_sel = (outs[0] / "selection.json").read_bytes() == \
               (outs[1] / "selection.json").read_bytes()
    same_sweep = (outs[0] / "sweep.csv").read_bytes() == \
                 (outs[1] / "sweep.csv").read_bytes()
    ok = same_sel and same_sweep
    _report(capsys, 8, ok,
            f"two identical pipeline runs: selection.json byte-identical: "
            f"{same_sel}, sweep.csv byte-identical: {same_sweep}")
    assert ok


def test_criterion_9_sweep_protocol(fixture42, trained42, capsys):
    cube, lidar, labels, _truth, cn, _ln, _patches = fixture42
    _model, report, _seconds = trained42
    a_norm = bandselect.normalize_attention(
        bandselect.aggregate_attention(report.final_masks))
    d_dis = bandselect.dissimilarity(cn)
    results = sweep(cube, lidar, labels, a_norm, d_dis, 0.5, 0.5)
    ks = [k for k, _sel, _rep in results]
    grid_ok = ks == [1, 5, 10, 12] and sweep_ks(60) == \
        [1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 60]
    full = evaluate_bands(cube, lidar, labels, list(range(12)), 0.5, 5, 0)
    last = results[-1][2]
    full_ok = (last.oa == full.oa and last.aa == full.aa
               and last.kappa == full.kappa
               and np.array_equal(last.confusion, full.confusion))
    ok = grid_ok and full_ok
    _report(capsys, 9, ok,
            f"sweep grid {ks} (expected [1, 5, 10, 12]); k=B row equals "
            f"full-band evaluation exactly: {full_ok}")
    assert ok

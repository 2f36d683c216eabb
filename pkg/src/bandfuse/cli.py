"""Command-line entry point: synth | train | select | eval | sweep | pipeline.

Configuration is a flat set of dotted keys. A JSON config file (--config)
may be nested or flat; any key can be overridden by a --<key> flag, and
flags win. All outputs land under --out with fixed names: cube.hsib,
lidar.hsib, labels.csv, truth.json, checkpoint.bfnn, report.json,
selection.json, eval.json, sweep.csv.

Exit codes: 0 success, 2 usage/config/data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bandselect, evaluation, rasters, synth
from .attention import AttentionNetConfig
from .autoencoder import (
    AutoencoderConfig,
    FusedMaskAutoencoder,
    compute_masks,
    train as train_model,
)
from .nn.checkpoint import CheckpointError
from .nn.layers import SgdConfig, TrainingError
from .rasters import RasterFormatError

DEFAULTS = {
    "hsi": (str, None, "path to the HSI cube (defaults to <out>/cube.hsib)"),
    "lidar": (str, None, "path to the LiDAR raster (defaults to <out>/lidar.hsib)"),
    "labels": (str, None, "path to the label CSV (defaults to <out>/labels.csv)"),
    "out": (str, ".", "output directory"),
    "patch_size": (int, 7, "square window size (odd)"),
    "stride": (int, 1, "patch stride"),
    "attention.hsi_hidden": ("json", None, "3 hidden widths for the HSI branch (default B,B,B)"),
    "attention.lidar_hidden": ("json", None, "3 hidden widths for the LiDAR branch (default P,P,P)"),
    "attention.fusion": (str, "multiply", "mask fusion: multiply | add"),
    "ae.channels": ("json", [64, 32], "encoder channel counts"),
    "ae.lambda": (float, 1e-3, "sparsity weight on the fused mask"),
    "train.epochs": (int, 50, "training epochs"),
    "train.batch_size": (int, 32, "minibatch size"),
    "train.lr": (float, 1e-4, "SGD learning rate"),
    "train.seed": (int, 0, "seed for init and shuffling"),
    "select.k": (int, 10, "number of bands to select"),
    "select.alpha": (float, 0.5, "attention-distance weight"),
    "select.beta": (float, 0.5, "dissimilarity-distance weight"),
    "select.linkage": (str, "average", "clustering linkage: single | complete | average"),
    "eval.train_fraction": (float, 0.5, "stratified training fraction"),
    "eval.knn_k": (int, 5, "KNN neighbor count"),
    "eval.seed": (int, 0, "split seed"),
    "threads": (int, 0, "cap on worker threads (0 = library default)"),
    "synth.height": (int, 32, "synthetic raster height"),
    "synth.width": (int, 32, "synthetic raster width"),
    "synth.bands": (int, 12, "synthetic band count"),
    "synth.k_true": (int, 3, "planted informative bands"),
    "synth.class_count": (int, 4, "synthetic class count"),
    "synth.sigma": (float, 0.02, "noise sigma"),
    "synth.redundancy": (float, 0.5, "fraction of redundant non-informative bands"),
    "synth.seed": (int, 0, "generator seed"),
}

OUT_NAMES = {
    "cube": "cube.hsib", "lidar": "lidar.hsib", "labels": "labels.csv",
    "truth": "truth.json", "checkpoint": "checkpoint.bfnn",
    "report": "report.json", "selection": "selection.json",
    "eval": "eval.json", "sweep": "sweep.csv",
}


class CliError(ValueError):
    pass


def _flatten(prefix: str, obj, into: dict) -> None:
    if isinstance(obj, dict):
        for key, val in obj.items():
            dotted = f"{prefix}.{key}" if prefix else key
            if isinstance(val, dict):
                _flatten(dotted, val, into)
            else:
                into[dotted] = val
    else:
        into[prefix] = obj


def _coerce(key: str, value):
    kind = DEFAULTS[key][0]
    if value is None:
        return None
    if kind == "json":
        if isinstance(value, str):
            return json.loads(value)
        return value
    return kind(value)


def load_config(args: argparse.Namespace) -> dict:
    cfg = {key: default for key, (_k, default, _h) in DEFAULTS.items()}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        flat: dict = {}
        _flatten("", raw, flat)
        for key, val in flat.items():
            if key not in DEFAULTS:
                raise CliError(f"unknown config key {key!r}")
            cfg[key] = _coerce(key, val)
    for key in DEFAULTS:
        flag_val = getattr(args, key.replace(".", "__"), None)
        if flag_val is not None:
            cfg[key] = _coerce(key, flag_val)
    return cfg


def _out_path(cfg: dict, name: str) -> str:
    return os.path.join(cfg["out"], OUT_NAMES[name])


def _input_path(cfg: dict, key: str, name: str) -> str:
    path = cfg[key] or _out_path(cfg, name)
    if not os.path.exists(path):
        raise CliError(f"missing input file: {path}")
    return path


def _load_pair(cfg: dict):
    cube = rasters.load_raster(_input_path(cfg, "hsi", "cube"))
    lidar = rasters.load_raster(_input_path(cfg, "lidar", "lidar"))
    if not isinstance(cube, rasters.HsiCube):
        raise CliError("HSI input has a single band; expected a multi-band cube")
    if not isinstance(lidar, rasters.LidarRaster):
        raise CliError("LiDAR input must be a single-band raster")
    return rasters.normalize_per_band(cube), rasters.normalize_lidar(lidar)


def _patches(cfg: dict, cube, lidar):
    return rasters.extract_patches(cube, lidar, cfg["patch_size"], cfg["stride"])


def _configs(cfg: dict, patch_size: int):
    att = AttentionNetConfig(
        tuple(cfg["attention.hsi_hidden"]) if cfg["attention.hsi_hidden"] else None,
        tuple(cfg["attention.lidar_hidden"]) if cfg["attention.lidar_hidden"] else None,
        cfg["attention.fusion"],
        cfg["train.seed"],
    )
    ae = AutoencoderConfig(tuple(cfg["ae.channels"]), cfg["ae.lambda"], patch_size)
    sgd = SgdConfig(cfg["train.lr"], cfg["train.epochs"], cfg["train.batch_size"],
                    cfg["train.seed"])
    return att, ae, sgd


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_synth(cfg: dict) -> None:
    spec = synth.SynthSpec(
        cfg["synth.height"], cfg["synth.width"], cfg["synth.bands"],
        cfg["synth.k_true"], cfg["synth.class_count"], cfg["synth.sigma"],
        cfg["synth.redundancy"], cfg["synth.seed"],
    )
    cube, lidar, labels, truth = synth.generate(spec)
    os.makedirs(cfg["out"], exist_ok=True)
    rasters.save_raster(cube, _out_path(cfg, "cube"))
    rasters.save_raster(lidar, _out_path(cfg, "lidar"))
    rasters.save_labels(labels, _out_path(cfg, "labels"))
    _write_json(_out_path(cfg, "truth"), truth.to_json_dict())


def cmd_train(cfg: dict) -> None:
    cube, lidar = _load_pair(cfg)
    patches = _patches(cfg, cube, lidar)
    att, ae, sgd = _configs(cfg, cfg["patch_size"])
    model, report = train_model(patches, ae, att, sgd)
    os.makedirs(cfg["out"], exist_ok=True)
    model.save(_out_path(cfg, "checkpoint"))
    _write_json(_out_path(cfg, "report"), report.to_json_dict())


def _scores(cfg: dict):
    cube, lidar = _load_pair(cfg)
    ckpt_path = os.path.join(cfg["out"], OUT_NAMES["checkpoint"])
    if not os.path.exists(ckpt_path):
        raise CliError(f"missing checkpoint: {ckpt_path}")
    patches = _patches(cfg, cube, lidar)
    att, ae, _sgd = _configs(cfg, cfg["patch_size"])
    model = FusedMaskAutoencoder(cube.bands, cfg["patch_size"], ae, att,
                                 seed=cfg["train.seed"])
    model.load(ckpt_path)
    masks = compute_masks(model, patches)
    a_norm = bandselect.normalize_attention(bandselect.aggregate_attention(masks))
    d_dis = bandselect.dissimilarity(cube)
    return cube, lidar, a_norm, d_dis


def cmd_select(cfg: dict) -> None:
    cube, _lidar, a_norm, d_dis = _scores(cfg)
    d_att = bandselect.attention_distance(a_norm)
    d_comb = bandselect.combined_distance(d_att, d_dis, cfg["select.alpha"],
                                          cfg["select.beta"])
    sel = bandselect.select_bands(d_comb, a_norm, cfg["select.k"],
                                  cfg["select.linkage"], cfg["select.alpha"],
                                  cfg["select.beta"])
    _write_json(_out_path(cfg, "selection"), sel.to_json_dict(a_norm))


def cmd_eval(cfg: dict) -> None:
    cube, lidar = _load_pair(cfg)
    labels = rasters.load_labels(_input_path(cfg, "labels", "labels"),
                                 cube.height, cube.width)
    sel_path = _out_path(cfg, "selection")
    if not os.path.exists(sel_path):
        raise CliError(f"missing selection file: {sel_path}")
    with open(sel_path, "r", encoding="utf-8") as fh:
        sel = json.load(fh)
    report = evaluation.evaluate_bands(
        cube, lidar, labels, sel["bands"], cfg["eval.train_fraction"],
        cfg["eval.knn_k"], cfg["eval.seed"])
    _write_json(_out_path(cfg, "eval"), report.to_json_dict())


def cmd_sweep(cfg: dict) -> None:
    cube, lidar, a_norm, d_dis = _scores(cfg)
    labels = rasters.load_labels(_input_path(cfg, "labels", "labels"),
                                 cube.height, cube.width)
    results = evaluation.sweep(
        cube, lidar, labels, a_norm, d_dis, cfg["select.alpha"],
        cfg["select.beta"], cfg["select.linkage"], cfg["eval.train_fraction"],
        cfg["eval.knn_k"], cfg["eval.seed"])
    with open(_out_path(cfg, "sweep"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(evaluation.sweep_csv_lines(results)) + "\n")


def cmd_pipeline(cfg: dict) -> None:
    cmd_synth(cfg)
    cfg = dict(cfg)
    cfg["hsi"] = cfg["lidar"] = cfg["labels"] = None  # use the synth outputs
    cmd_train(cfg)
    cmd_select(cfg)
    cmd_eval(cfg)
    cmd_sweep(cfg)


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "select": cmd_select,
    "eval": cmd_eval, "sweep": cmd_sweep, "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandfuse",
        description="LiDAR-fused attention band selection pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", help="JSON config file (flags override it)")
        for key, (kind, default, helptext) in DEFAULTS.items():
            typ = str if kind == "json" else kind
            p.add_argument(f"--{key}", dest=key.replace(".", "__"), type=typ,
                           default=None, help=f"{helptext} (default: {default})")
    return parser


def _cap_threads(limit: int) -> None:
    """Cap BLAS worker threads; harmless no-op if threadpoolctl is absent."""
    try:
        import threadpoolctl
    except ImportError:
        return
    threadpoolctl.threadpool_limits(limits=limit)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if cfg["threads"] > 0:
            _cap_threads(cfg["threads"])
        COMMANDS[args.command](cfg)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (CliError, CheckpointError, RasterFormatError, ValueError, OSError,
            json.JSONDecodeError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

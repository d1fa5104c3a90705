"""Glue between config files, datasets, training and reports."""

from __future__ import annotations

import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..evalreport import build_report
from ..net import InputScaling, NetworkEnsemble
from ..sampler import TrainingSet, default_caps, load_point_cloud, zone_sample
from ..trainer import train
from .checkpoint import Checkpoint, save_checkpoint
from .config import RunConfig
from .mms import load_sources

log = logging.getLogger(__name__)


def sources_path(cloud_path) -> Path:
    p = Path(cloud_path)
    return p.with_name(p.stem + ".sources.csv")


def build_training_set(cfg: RunConfig) -> TrainingSet:
    """Zone-sample every cloud (with its sources, if present) and pool the results."""
    parts = []
    for i, path in enumerate(cfg.clouds):
        cloud = load_point_cloud(path)
        sp = sources_path(path)
        src = load_sources(sp, cloud) if sp.exists() else None
        seed = int(np.random.SeedSequence([cfg.train.seed, i]).generate_state(1)[0])
        parts.append(zone_sample(cloud, default_caps(cloud, cfg.budget), seed, src, cfg.inlet_velocity))
    if any(p.sources is None for p in parts) and any(p.sources is not None for p in parts):
        raise ValueError("either every cloud or no cloud may come with a sources file")
    return TrainingSet.concat(parts)


def fresh_ensemble(cfg: RunConfig, data: TrainingSet, seed: int | None = None) -> NetworkEnsemble:
    seed = cfg.train.seed if seed is None else seed
    return NetworkEnsemble.create(cfg.hidden, seed=seed, scaling=InputScaling.from_points(data.points))


def run_training(cfg: RunConfig, data: TrainingSet | None = None, write: bool = True):
    """Train per ``cfg``; optionally write checkpoint, loss history and resolved config."""
    data = build_training_set(cfg) if data is None else data
    ens = fresh_ensemble(cfg, data)
    trained, history = train(cfg.train, data, ens, cfg.consts)
    lambdas = history.calibrations[-1]["lambdas"] if history.calibrations else (0.0, 0.0, 0.0, 0.0)
    ck = Checkpoint(
        trained,
        cfg.consts,
        provenance={
            "seed": cfg.train.seed,
            "budget": cfg.budget,
            "clouds": [Path(c).name for c in cfg.clouds],
            "n_points": len(data),
            "train_re": sorted(float(r) for r in np.unique(data.points[:, 2])),
        },
        lambdas=tuple(lambdas),
        epoch=cfg.train.epochs,
    )
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ck, out / "checkpoint.ckpt")
        history.to_csv(out / "loss_history.csv")
        resolved = cfg.resolved()
        resolved.pop("workers", None)  # execution detail; results do not depend on it
        (out / "resolved_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    return ck, history


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, train=replace(cfg.train, seed=seed))


def evaluate_cloud(ens: NetworkEnsemble, cloud, n_bins: int = 20, metadata: dict | None = None):
    if cloud.truth is None:
        raise ValueError("evaluation cloud has no ground-truth columns")
    pred = ens.predict(cloud.points())
    return build_report(pred, cloud.truth, cloud.xy, n_bins, metadata)

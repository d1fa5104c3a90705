"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (bad arguments, config, CSV or
checkpoint), 2 failure while running (divergence, numerical errors).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..sampler import SchemaError, default_caps, load_point_cloud, zone_sample
from ..trainer import TrainingDiverged
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, load_mms_spec, load_run_config
from .mms import mms_generate

log = logging.getLogger("ranspinn")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class InvalidInput(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidInput(message)


def _log_resolved(command: str, settings: dict) -> None:
    log.info("%s resolved configuration: %s", command, json.dumps(settings, sort_keys=True, default=str))


def _parse_seeds(text: str) -> list:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InvalidInput(f"--seeds must be comma-separated integers, got {text!r}") from None
    if len(seeds) < 2:
        raise InvalidInput("--seeds needs at least two seeds")
    return seeds


def _parse_caps(text: str | None, cloud) -> dict:
    if text is None:
        return default_caps(cloud)
    text = text.strip()
    try:
        if ":" not in text:
            return {z: int(text) for z in range(cloud.n_zones)}
        caps = {}
        for item in text.split(","):
            z, c = item.split(":")
            caps[int(z)] = int(c)
    except ValueError:
        raise InvalidInput(f"--caps must be N or zone:N,... got {text!r}") from None
    if any(c < 0 for c in caps.values()):
        raise InvalidInput("caps must be nonnegative")
    return caps


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        out["workers"] = args.workers
    if getattr(args, "epochs", None) is not None:
        out["epochs"] = args.epochs
    return out


def cmd_mms_gen(args) -> int:
    spec, out = load_mms_spec(args.spec)
    if args.out:
        out = Path(args.out)
    from dataclasses import asdict

    _log_resolved("mms-gen", {**asdict(spec), "out_dir": str(out)})
    paths = mms_generate(spec, out)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_train(args) -> int:
    from .pipeline import run_training

    cfg = load_run_config(args.config, _overrides(args))
    if args.out:
        cfg.out_dir = Path(args.out)
    _log_resolved("train", cfg.resolved())
    ck, history = run_training(cfg)
    last = history.rows[-1][2].total if len(history) else float("nan")
    print(f"trained {cfg.train.epochs} epochs, final total loss {last:.6g}; wrote {cfg.out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .pipeline import evaluate_cloud

    ck = load_checkpoint(args.checkpoint)
    cloud = load_point_cloud(args.cloud)
    if cloud.truth is None:
        raise InvalidInput(f"{args.cloud}: evaluation needs ground-truth columns")
    _log_resolved("evaluate", {"checkpoint": args.checkpoint, "cloud": args.cloud, "out": args.out, "bins": args.bins, "svg": args.svg})
    train_re = ck.provenance.get("train_re", [])
    meta = {
        "Re": cloud.Re,
        "in_training_range": bool(train_re) and min(train_re) <= cloud.Re <= max(train_re),
    }
    report = evaluate_cloud(ck.ensemble, cloud, args.bins, meta)
    report.write(args.out, svg=args.svg)
    print(f"Re = {cloud.Re:g} ({'inside' if meta['in_training_range'] else 'outside'} training range)")
    print(report.format_table())
    if report.metadata["degenerate_range"]:
        print(f"warning: constant truth field for {report.metadata['degenerate_range']}; range floor used", file=sys.stderr)
    return EXIT_OK


def cmd_variance(args) -> int:
    from ..evalreport import variance_study
    from ..trainer import train
    from .pipeline import build_training_set, fresh_ensemble, with_seed

    seeds = _parse_seeds(args.seeds)
    cfg = load_run_config(args.config, _overrides(args))
    cloud = load_point_cloud(args.cloud if args.cloud else cfg.clouds[0])
    _log_resolved("variance", {**cfg.resolved(), "seeds": seeds, "cloud": str(args.cloud or cfg.clouds[0])})
    data = build_training_set(cfg)

    def train_seed(seed):
        c = with_seed(cfg, seed)
        return train(c.train, data, fresh_ensemble(c, data), c.consts)[0]

    res = variance_study(train_seed, seeds, cloud.points())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ("u", "v", "p", "k", "eps")
    with (out / "variance.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"] + [f"var_{n}" for n in names])
        for i in range(len(cloud)):
            w.writerow([repr(float(cloud.xy[i, 0])), repr(float(cloud.xy[i, 1]))] + [repr(float(res.variance[n][i])) for n in names])
    for n in ("u", "v", "p"):
        frac = float(np.mean(res.variance[n] < 1e-3))
        print(f"{n}: max variance {res.variance[n].max():.3e}, fraction below 1e-3: {frac:.3f}")
    if res.diverged:
        print(f"excluded diverged seeds: {sorted(res.diverged)}", file=sys.stderr)
    return EXIT_OK


def cmd_sample_preview(args) -> int:
    cloud = load_point_cloud(args.cloud)
    caps = _parse_caps(args.caps, cloud)
    _log_resolved("sample-preview", {"cloud": args.cloud, "caps": caps, "seed": args.seed})
    ts = zone_sample(cloud, caps, args.seed)
    sizes = np.bincount(cloud.zone, minlength=cloud.n_zones)
    drawn = np.bincount(ts.zone, minlength=cloud.n_zones)
    print(f"{'zone':>4} {'size':>7} {'cap':>7} {'drawn':>7}")
    for z in range(cloud.n_zones):
        print(f"{z:>4} {sizes[z]:>7} {caps.get(z, 0):>7} {drawn[z]:>7}")
    b = ts.boundary
    print("boundary: " + ", ".join(f"{t} {len(i)}" for t, i in b.indices.items()))
    if args.out:
        with Path(args.out).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "x", "y", "zone"])
            for i, z in zip(ts.indices, ts.zone):
                w.writerow([int(i), repr(float(cloud.xy[i, 0])), repr(float(cloud.xy[i, 1])), int(z)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS, help="log warnings only")
    p = _Parser(prog="ranspinn", description="Parametric RANS k-epsilon PINN surrogates.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("mms-gen", parents=[common], help="write manufactured-solution clouds and sources")
    s.add_argument("spec")
    s.add_argument("--out", help="override out_dir from the MMS file")
    s.set_defaults(fn=cmd_mms_gen)

    s = sub.add_parser("train", parents=[common], help="train an ensemble from a config file")
    s.add_argument("config")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", help="override out_dir from the config")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="error report of a checkpoint on a cloud with truth")
    s.add_argument("checkpoint")
    s.add_argument("cloud")
    s.add_argument("--out", required=True)
    s.add_argument("--bins", type=int, default=20)
    s.add_argument("--svg", action="store_true", help="also write SVG plots (needs matplotlib)")
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("variance", parents=[common], help="per-point prediction variance over seeds")
    s.add_argument("config")
    s.add_argument("--seeds", required=True, help="comma-separated, e.g. 1,2,3")
    s.add_argument("--cloud", help="evaluation cloud (default: first training cloud)")
    s.add_argument("--out", default="variance")
    s.add_argument("--epochs", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(fn=cmd_variance)

    s = sub.add_parser("sample-preview", parents=[common], help="show zone-capped sample counts")
    s.add_argument("cloud")
    s.add_argument("--caps", help="N for every zone, or zone:N,zone:N")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="write sampled rows to CSV")
    s.set_defaults(fn=cmd_sample_preview)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(
        level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.fn(args)
    except (InvalidInput, ConfigError, SchemaError, CheckpointError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

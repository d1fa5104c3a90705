"""Normalized error fields, summary statistics, histograms and seed-variance maps."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "ErrorReport",
    "RANGE_FLOOR",
    "VarianceResult",
    "build_report",
    "error_stats",
    "histogram",
    "nearest_rank",
    "normalized_error_field",
    "variance_study",
]

RANGE_FLOOR = 1e-12
REPORT_VARS = ("u", "v", "p")


def normalized_error_field(pred, truth, variable: str = "") -> tuple[np.ndarray, float, bool]:
    """``|pred - truth| / max(range(truth), 1e-12)``.

    Returns ``(errors, denominator, degenerate)`` where ``degenerate`` flags a
    constant truth field (the floor was used).
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"{variable or 'field'}: prediction shape {pred.shape} != truth shape {truth.shape}")
    if truth.size == 0:
        raise ValueError("empty evaluation set")
    rng = float(np.max(truth) - np.min(truth))
    denom = max(rng, RANGE_FLOOR)
    return np.abs(pred - truth) / denom, denom, rng < RANGE_FLOOR


def nearest_rank(sorted_vals: np.ndarray, q) -> float:
    """Element at rank ``ceil(q N)`` (1-based, at least 1) of an ascending array."""
    n = len(sorted_vals)
    rank = max(1, math.ceil(Fraction(str(q)) * n))
    return float(sorted_vals[min(rank, n) - 1])


def error_stats(errors) -> dict:
    """Mean, nearest-rank median and nearest-rank 95th percentile."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("no errors to summarize")
    s = np.sort(e)
    return {"mean": float(np.mean(e)), "median": nearest_rank(s, 0.5), "p95": nearest_rank(s, 0.95)}


def histogram(errors, n_bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Uniform bins over ``[0, max(errors)]``; returns ``(edges, fractions)``.

    Bins are right-closed, the first one also holding 0, so the maximum lands
    in the last bin. All-zero input uses edges over [0, 1].
    """
    e = np.asarray(errors, dtype=float).ravel()
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    if e.size == 0:
        raise ValueError("no errors to bin")
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be finite and nonnegative")
    top = float(e.max())
    edges = np.linspace(0.0, top if top > 0 else 1.0, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, e, side="left") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return edges, counts / e.size


@dataclass
class ErrorReport:
    errors: dict  # variable -> per-point errors
    stats: dict  # variable -> {mean, median, p95}
    histograms: dict  # variable -> (edges, fractions)
    points: np.ndarray  # (N, 2)
    metadata: dict = field(default_factory=dict)

    def write(self, out_dir, svg: bool = False) -> list:
        """Write stats.csv, hist_<var>.csv and errors.csv (plus SVGs if requested and possible)."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "stats.csv", out / "errors.csv"]
        with (out / "stats.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variable", "mean", "p95", "median"])
            for var in self.stats:
                s = self.stats[var]
                w.writerow([var, repr(s["mean"]), repr(s["p95"]), repr(s["median"])])
        for var, (edges, frac) in self.histograms.items():
            path = out / f"hist_{var}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["bin_lo", "bin_hi", "fraction"])
                for lo, hi, f in zip(edges[:-1], edges[1:], frac):
                    w.writerow([repr(float(lo)), repr(float(hi)), repr(float(f))])
            written.append(path)
        with (out / "errors.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "err_u", "err_v", "err_p"])
            for i in range(len(self.points)):
                w.writerow([repr(float(self.points[i, 0])), repr(float(self.points[i, 1]))]
                           + [repr(float(self.errors[v][i])) for v in REPORT_VARS])
        if svg:
            written += self._plots(out)
        return written

    def _plots(self, out: Path) -> list:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            log.warning("matplotlib not installed; skipping SVG output")
            return []
        paths = []
        for var, (edges, frac) in self.histograms.items():
            fig, ax = plt.subplots(figsize=(4, 3))
            ax.bar(edges[:-1], frac, width=np.diff(edges), align="edge")
            ax.set_xlabel(f"normalized {var} error")
            ax.set_ylabel("fraction of points")
            fig.tight_layout()
            fig.savefig(out / f"hist_{var}.svg")
            plt.close(fig)
            paths.append(out / f"hist_{var}.svg")
        fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
        for ax, var in zip(axes, REPORT_VARS):
            sc = ax.scatter(self.points[:, 0], self.points[:, 1], c=self.errors[var], s=4)
            ax.set_title(f"{var} error")
            fig.colorbar(sc, ax=ax)
        fig.tight_layout()
        fig.savefig(out / "errors.svg")
        plt.close(fig)
        paths.append(out / "errors.svg")
        return paths

    def format_table(self) -> str:
        lines = [f"{'variable':<9}{'mean':>10}{'p95':>10}{'median':>10}"]
        for var, s in self.stats.items():
            lines.append(f"{var:<9}{s['mean']:>10.4f}{s['p95']:>10.4f}{s['median']:>10.4f}")
        return "\n".join(lines)


def build_report(pred: dict, truth: dict, points, n_bins: int = 20, metadata: dict | None = None) -> ErrorReport:
    """Error report over u, v, p for one evaluation cloud."""
    errors, stats, hists, denoms, degenerate = {}, {}, {}, {}, []
    for var in REPORT_VARS:
        e, d, flag = normalized_error_field(pred[var], truth[var], var)
        errors[var], denoms[var] = e, d
        if flag:
            degenerate.append(var)
        stats[var] = error_stats(e)
        hists[var] = histogram(e, n_bins)
    meta = dict(metadata or {})
    meta["normalization"] = denoms
    meta["degenerate_range"] = degenerate
    return ErrorReport(errors, stats, hists, np.asarray(points, dtype=float)[:, :2], meta)


@dataclass
class VarianceResult:
    variance: dict  # variable -> per-point sample variance
    seeds_used: list
    diverged: dict  # seed -> message


def variance_study(train_fn, seeds, points) -> VarianceResult:
    """Per-point sample variance (ddof = 1) of predictions across seeds.

    ``train_fn(seed)`` returns a trained ensemble or raises
    :class:`~ranspinn.trainer.TrainingDiverged`; diverged seeds are excluded
    and listed.
    """
    from .trainer import TrainingDiverged

    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("a variance study needs at least two seeds")
    preds, used, diverged = [], [], {}
    for s in seeds:
        try:
            ens = train_fn(s)
        except TrainingDiverged as exc:
            diverged[s] = str(exc)
            log.warning("seed %s diverged and is excluded: %s", s, exc)
            continue
        preds.append(ens.predict(points))
        used.append(s)
    if len(used) < 2:
        raise RuntimeError(f"fewer than two seeds converged (diverged: {sorted(diverged)})")
    # shift by the first run so identical runs give exactly zero
    var = {}
    for v in ("u", "v", "p", "k", "eps"):
        stack = np.stack([p[v] for p in preds])
        var[v] = np.var(stack - stack[0], axis=0, ddof=1)
    return VarianceResult(var, used, diverged)

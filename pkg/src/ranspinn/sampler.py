"""Zoned point clouds and zone-capped stratified sampling.

Point-cloud CSV, header mandatory::

    x,y,zone,tag,Re[,u,v,p,k,eps]

``tag`` is one of interior, inlet, outlet, wall, freestream. One file holds
one Reynolds number. Ground-truth columns are all present or all absent.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .physics import FIELDS

__all__ = [
    "BoundaryTargets",
    "SchemaError",
    "TAGS",
    "TrainingSet",
    "ZonedPointCloud",
    "default_caps",
    "load_point_cloud",
    "save_point_cloud",
    "split_boundary_sets",
    "zone_sample",
]

TAGS = ("interior", "inlet", "outlet", "wall", "freestream")
BASE_COLUMNS = ("x", "y", "zone", "tag", "Re")
TRUTH_COLUMNS = FIELDS


class SchemaError(ValueError):
    """A point-cloud or source file does not conform to its CSV schema."""


@dataclass
class ZonedPointCloud:
    xy: np.ndarray  # (N, 2)
    zone: np.ndarray  # (N,) int
    tag: np.ndarray  # (N,) str
    Re: float
    truth: dict | None = None  # field -> (N,)

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        self.zone = np.asarray(self.zone, dtype=int)
        self.tag = np.asarray(self.tag, dtype=object)
        n = len(self.xy)
        if self.zone.shape != (n,) or self.tag.shape != (n,):
            raise SchemaError("xy, zone and tag must have one entry per point")
        if not self.Re > 0:
            raise SchemaError(f"Re must be positive, got {self.Re}")
        bad = set(self.tag) - set(TAGS)
        if bad:
            raise SchemaError(f"unknown boundary tag(s) {sorted(bad)}")
        if n:
            ids = np.unique(self.zone)
            if ids[0] != 0 or ids[-1] != len(ids) - 1:
                raise SchemaError(f"zone ids must be contiguous from 0, got {ids.tolist()}")
        if self.truth is not None:
            missing = [f for f in FIELDS if f not in self.truth]
            if missing:
                raise SchemaError(f"ground truth missing field(s) {missing}")
            self.truth = {f: np.asarray(self.truth[f], dtype=float).reshape(n) for f in FIELDS}

    def __len__(self) -> int:
        return len(self.xy)

    @property
    def n_zones(self) -> int:
        return int(self.zone.max()) + 1 if len(self) else 0

    def points(self, idx=slice(None)) -> np.ndarray:
        """Network inputs ``(x, y, Re)`` for the selected rows."""
        xy = self.xy[idx]
        return np.column_stack([xy, np.full(len(xy), float(self.Re))])


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise SchemaError(f"row {row}: column {col!r} is not a number: {text!r}") from None
    if not np.isfinite(val):
        raise SchemaError(f"row {row}: column {col!r} is not finite")
    return val


def load_point_cloud(path) -> ZonedPointCloud:
    """Read and validate a point-cloud CSV. Row numbers in errors count the header as row 1."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if tuple(header[:5]) != BASE_COLUMNS:
            raise SchemaError(f"{path}: header must start with {','.join(BASE_COLUMNS)}, got {','.join(header)}")
        extra = header[5:]
        if extra and tuple(extra) != TRUTH_COLUMNS:
            present = set(extra) & set(TRUTH_COLUMNS)
            missing = [c for c in TRUTH_COLUMNS if c not in present]
            raise SchemaError(f"{path}: ground-truth columns must be {','.join(TRUTH_COLUMNS)}; missing {missing}")
        xy, zone, tag, truth = [], [], [], []
        re_val = None
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}: row {rownum}: expected {len(header)} columns, got {len(row)}")
            x = _parse_float(row[0], rownum, "x")
            y = _parse_float(row[1], rownum, "y")
            z = row[2].strip()
            if not z.lstrip("-").isdigit() or int(z) < 0:
                raise SchemaError(f"{path}: row {rownum}: zone must be a nonnegative integer, got {z!r}")
            t = row[3].strip()
            if t not in TAGS:
                raise SchemaError(f"{path}: row {rownum}: unknown tag {t!r}")
            re_row = _parse_float(row[4], rownum, "Re")
            if re_row <= 0:
                raise SchemaError(f"{path}: row {rownum}: Re must be positive")
            if re_val is None:
                re_val = re_row
            elif re_row != re_val:
                raise SchemaError(f"{path}: row {rownum}: one Reynolds number per file ({re_row} != {re_val})")
            xy.append((x, y))
            zone.append(int(z))
            tag.append(t)
            if extra:
                truth.append([_parse_float(row[5 + i], rownum, c) for i, c in enumerate(TRUTH_COLUMNS)])
    if re_val is None:
        raise SchemaError(f"{path}: no data rows")
    ids = sorted(set(zone))
    if ids != list(range(len(ids))):
        raise SchemaError(f"{path}: zone ids must be contiguous from 0, got {ids}")
    gt = None
    if extra:
        arr = np.asarray(truth)
        if np.any(arr[:, 4] < 0):
            raise SchemaError(f"{path}: negative epsilon in ground truth")
        gt = {f: arr[:, i] for i, f in enumerate(TRUTH_COLUMNS)}
    return ZonedPointCloud(np.asarray(xy), np.asarray(zone), np.asarray(tag, dtype=object), re_val, gt)


def save_point_cloud(cloud: ZonedPointCloud, path) -> None:
    header = list(BASE_COLUMNS) + (list(TRUTH_COLUMNS) if cloud.truth is not None else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(cloud)):
            row = [repr(float(cloud.xy[i, 0])), repr(float(cloud.xy[i, 1])), int(cloud.zone[i]), cloud.tag[i], repr(float(cloud.Re))]
            if cloud.truth is not None:
                row += [repr(float(cloud.truth[f][i])) for f in TRUTH_COLUMNS]
            w.writerow(row)


def default_caps(cloud: ZonedPointCloud, budget: int = 3000) -> dict:
    """Split ``budget`` equally across zones; the remainder goes to the largest zone."""
    z = cloud.n_zones
    if z == 0:
        return {}
    base, rem = divmod(int(budget), z)
    caps = {i: base for i in range(z)}
    sizes = np.bincount(cloud.zone, minlength=z)
    caps[int(np.argmax(sizes))] += rem
    return caps


@dataclass
class BoundaryTargets:
    """Dirichlet targets: velocity at inlet/wall/freestream points, pressure at outlet points."""

    velocity_points: np.ndarray  # (M, 3)
    velocity_targets: np.ndarray  # (M, 2)
    pressure_points: np.ndarray  # (P, 3)
    pressure_targets: np.ndarray  # (P,)
    indices: dict = field(default_factory=dict)  # tag -> cloud row indices

    @classmethod
    def empty(cls) -> "BoundaryTargets":
        return cls(np.zeros((0, 3)), np.zeros((0, 2)), np.zeros((0, 3)), np.zeros(0))

    def __len__(self) -> int:
        return len(self.velocity_points) + len(self.pressure_points)

    @staticmethod
    def concat(parts) -> "BoundaryTargets":
        parts = list(parts)
        if not parts:
            return BoundaryTargets.empty()
        return BoundaryTargets(
            np.concatenate([p.velocity_points for p in parts]),
            np.concatenate([p.velocity_targets for p in parts]),
            np.concatenate([p.pressure_points for p in parts]),
            np.concatenate([p.pressure_targets for p in parts]),
        )


def split_boundary_sets(cloud: ZonedPointCloud, inlet_velocity: float = 1.0, require_inlet: bool = False) -> BoundaryTargets:
    """Group tagged points and attach their Dirichlet targets.

    Inlet and freestream points target ``(inlet_velocity, 0)``; wall points
    ``(0, 0)``; outlet points target zero pressure. Interior points appear in
    no set.
    """
    idx = {t: np.flatnonzero(cloud.tag == t) for t in TAGS if t != "interior"}
    if require_inlet and len(idx["inlet"]) == 0:
        warnings.warn("inlet loss configured but the cloud has no inlet points", stacklevel=2)
    vel_idx = np.concatenate([idx["inlet"], idx["freestream"], idx["wall"]])
    vel_t = np.zeros((len(vel_idx), 2))
    n_moving = len(idx["inlet"]) + len(idx["freestream"])
    vel_t[:n_moving, 0] = inlet_velocity
    return BoundaryTargets(
        cloud.points(vel_idx),
        vel_t,
        cloud.points(idx["outlet"]),
        np.zeros(len(idx["outlet"])),
        idx,
    )


@dataclass
class TrainingSet:
    """Sampled interior/data points (with optional truth and sources) plus boundary targets."""

    points: np.ndarray  # (N, 3) x, y, Re
    truth: dict | None  # field -> (N,)
    sources: dict | None  # s_mass, s_momx, s_momy, s_k, s_eps -> (N,)
    boundary: BoundaryTargets
    indices: np.ndarray  # cloud row of each sampled point
    zone: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    @staticmethod
    def concat(parts) -> "TrainingSet":
        parts = list(parts)
        has_truth = all(p.truth is not None for p in parts)
        has_src = all(p.sources is not None for p in parts)
        return TrainingSet(
            np.concatenate([p.points for p in parts]),
            {f: np.concatenate([p.truth[f] for p in parts]) for f in FIELDS} if has_truth else None,
            {k: np.concatenate([p.sources[k] for p in parts]) for k in parts[0].sources} if has_src else None,
            BoundaryTargets.concat(p.boundary for p in parts),
            np.concatenate([p.indices for p in parts]),
            np.concatenate([p.zone for p in parts]),
            {"parts": [p.provenance for p in parts]},
        )


def zone_sample(
    cloud: ZonedPointCloud,
    caps: Mapping[int, int] | None = None,
    seed: int = 0,
    sources: Mapping[str, np.ndarray] | None = None,
    inlet_velocity: float = 1.0,
) -> TrainingSet:
    """Draw ``min(cap, zone size)`` points uniformly without replacement from each zone.

    Zones missing from ``caps`` contribute nothing; ``caps=None`` uses
    :func:`default_caps`. Selected rows are returned in cloud order.
    """
    if caps is None:
        caps = default_caps(cloud)
    if any(int(c) < 0 for c in caps.values()):
        raise ValueError("zone caps must be nonnegative")
    rng = np.random.default_rng(seed)
    chosen = []
    for z in range(cloud.n_zones):
        members = np.flatnonzero(cloud.zone == z)
        take = min(int(caps.get(z, 0)), len(members))
        if take:
            chosen.append(rng.choice(members, size=take, replace=False))
    idx = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=int)
    truth = {f: cloud.truth[f][idx] for f in FIELDS} if cloud.truth is not None else None
    src = {k: np.asarray(v)[idx] for k, v in sources.items()} if sources is not None else None
    return TrainingSet(
        cloud.points(idx),
        truth,
        src,
        split_boundary_sets(cloud, inlet_velocity),
        idx,
        cloud.zone[idx],
        {"seed": int(seed), "caps": {int(k): int(v) for k, v in caps.items()}, "Re": float(cloud.Re)},
    )

"""Manufactured-solution datasets on a rectangle.

Velocity comes from the streamfunction

    psi = a(Re) sin(m pi xi) sin(n pi eta) + U0 y,   a(Re) = a0 (Re / Re_ref)**alpha

with ``xi, eta`` the coordinates mapped to [0, 1]. Pressure, k and epsilon use
offset-cosine forms so that k and epsilon stay strictly positive and p vanishes
on the right (outlet) edge. Sources are the residuals of the analytic fields,
evaluated with the same jets used in training.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import Jet2, lift
from ..physics import FlowState, ModelConstants, pde_residuals
from ..sampler import ZonedPointCloud, save_point_cloud

__all__ = ["MmsSpec", "SOURCE_COLUMNS", "mms_cloud", "mms_fields", "mms_generate", "mms_sources", "load_sources", "save_sources"]

SOURCE_COLUMNS = ("x", "y", "s_momx", "s_momy", "s_k", "s_eps")


@dataclass(frozen=True)
class MmsSpec:
    a0: float = 0.08
    m: int = 1
    n: int = 1
    alpha: float = 1.0
    Re_ref: float = 1500.0
    U0: float = 1.0
    p_amp: float = 0.3
    p_beta: float = 0.5
    k0: float = 0.01
    k_amp: float = 0.5
    eps0: float = 0.02
    eps_amp: float = 0.5
    domain: tuple = (0.0, 1.0, 0.0, 1.0)  # x0, x1, y0, y1
    re_list: tuple = (1000.0, 1200.0, 1400.0, 1600.0, 1800.0, 2000.0)
    points_per_axis: int = 60
    zones: tuple = (2, 2)  # zone grid (nx, ny)

    def validate(self):
        x0, x1, y0, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"empty domain {self.domain}")
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be at least 2")
        if len(self.re_list) == 0 or any(not r > 0 for r in self.re_list):
            raise ValueError("re_list must hold positive Reynolds numbers")
        if not self.Re_ref > 0:
            raise ValueError("Re_ref must be positive")
        if len(self.zones) != 2 or min(self.zones) < 1:
            raise ValueError("zones must be a pair of positive counts")
        # k = k0 (1 + k_amp cos . cos) and eps likewise: positive iff offset dominates
        if not (self.k0 > 0 and abs(self.k_amp) < 1):
            raise ValueError("k field is not strictly positive (need k0 > 0 and |k_amp| < 1)")
        if not (self.eps0 > 0 and abs(self.eps_amp) < 1):
            raise ValueError("epsilon field is not strictly positive (need eps0 > 0 and |eps_amp| < 1)")
        return self

    def grid(self):
        x0, x1, y0, y1 = self.domain
        xs = np.linspace(x0, x1, self.points_per_axis)
        ys = np.linspace(y0, y1, self.points_per_axis)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return X.ravel(), Y.ravel()


def _coord(spec, x, y):
    x0, x1, y0, y1 = spec.domain
    xj = x if isinstance(x, Jet2) else Jet2(np.asarray(x, float), 1.0)
    yj = y if isinstance(y, Jet2) else Jet2(np.asarray(y, float), 0.0, 1.0)
    return (xj - x0).scale(1.0 / (x1 - x0)), (yj - y0).scale(1.0 / (y1 - y0)), (x1 - x0), (y1 - y0)


def mms_fields(spec: MmsSpec, x, y, Re: float) -> FlowState:
    """Analytic fields as jets in the physical coordinates."""
    xi, eta, lx, ly = _coord(spec, x, y)
    pi = np.pi
    a = spec.a0 * (Re / spec.Re_ref) ** spec.alpha
    sx, cx = lift("sin", xi.scale(spec.m * pi)), lift("cos", xi.scale(spec.m * pi))
    sy, cy = lift("sin", eta.scale(spec.n * pi)), lift("cos", eta.scale(spec.n * pi))
    # u = dpsi/dy, v = -dpsi/dx with the chain factors 1/ly, 1/lx
    u = (sx * cy).scale(a * spec.n * pi / ly) + spec.U0
    v = (cx * sy).scale(-a * spec.m * pi / lx)
    p = (lift("cos", xi.scale(pi / 2)) * (lift("cos", eta.scale(pi)).scale(spec.p_beta) + 1.0)).scale(spec.p_amp)
    k = (lift("cos", xi.scale(pi)) * lift("cos", eta.scale(pi))).scale(spec.k_amp) + 1.0
    k = k.scale(spec.k0)
    eps = (lift("sin", xi.scale(pi)) * lift("cos", eta.scale(pi / 2.0))).scale(spec.eps_amp) + 1.0
    eps = eps.scale(spec.eps0)
    xv = xi.value * lx + spec.domain[0]
    yv = eta.value * ly + spec.domain[2]
    return FlowState(u, v, p, k, eps, x=xv, y=yv, Re=float(Re))


def mms_sources(spec: MmsSpec, x, y, Re: float, consts: ModelConstants = ModelConstants()) -> dict:
    """Forcing that makes the analytic fields exact solutions (continuity needs none)."""
    state = mms_fields(spec, x, y, Re)
    rx, ry, rc, rk, re = pde_residuals(state, consts)
    n = np.shape(np.asarray(x))
    return {
        "s_mass": np.zeros(n),
        "s_momx": np.broadcast_to(rx, n).copy(),
        "s_momy": np.broadcast_to(ry, n).copy(),
        "s_k": np.broadcast_to(rk, n).copy(),
        "s_eps": np.broadcast_to(re, n).copy(),
        "continuity": np.broadcast_to(rc, n).copy(),
    }


def _zones(spec, x, y):
    x0, x1, y0, y1 = spec.domain
    nx, ny = spec.zones
    ix = np.minimum(((x - x0) / (x1 - x0) * nx).astype(int), nx - 1)
    iy = np.minimum(((y - y0) / (y1 - y0) * ny).astype(int), ny - 1)
    return ix * ny + iy


def mms_cloud(spec: MmsSpec, Re: float, consts: ModelConstants = ModelConstants()):
    """Point cloud (with truth) and sources for one Reynolds number."""
    spec.validate()
    x, y = spec.grid()
    st = mms_fields(spec, x, y, Re)
    vals = {name: np.broadcast_to(np.asarray(st.field(name).value, float), x.shape).copy() for name in ("u", "v", "p", "k", "eps")}
    if np.any(vals["k"] <= 0) or np.any(vals["eps"] <= 0):
        raise ValueError("manufactured k or epsilon is not strictly positive")
    tag = np.where(np.isclose(x, spec.domain[1]), "outlet", "interior").astype(object)
    cloud = ZonedPointCloud(np.column_stack([x, y]), _zones(spec, x, y), tag, float(Re), vals)
    src = mms_sources(spec, x, y, Re, consts)
    src.pop("continuity")
    return cloud, src


def save_sources(path, x, y, sources: dict) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SOURCE_COLUMNS)
        for i in range(len(x)):
            w.writerow([repr(float(x[i])), repr(float(y[i]))] + [repr(float(sources[c][i])) for c in SOURCE_COLUMNS[2:]])


def load_sources(path, cloud: ZonedPointCloud | None = None) -> dict:
    """Read a source CSV; with ``cloud`` given, rows must align with its points."""
    from ..sampler import SchemaError

    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if tuple(header) != SOURCE_COLUMNS:
            raise SchemaError(f"{path}: header must be {','.join(SOURCE_COLUMNS)}")
        rows = []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise SchemaError(f"{path}: row {rownum}: non-numeric value") from None
            if len(row) != len(SOURCE_COLUMNS):
                raise SchemaError(f"{path}: row {rownum}: expected {len(SOURCE_COLUMNS)} columns")
    arr = np.asarray(rows, dtype=float).reshape(-1, len(SOURCE_COLUMNS))
    if cloud is not None:
        if len(arr) != len(cloud) or not np.array_equal(arr[:, :2], cloud.xy):
            raise SchemaError(f"{path}: rows do not align with the point cloud")
    out = {c: arr[:, i + 2] for i, c in enumerate(SOURCE_COLUMNS[2:])}
    out["s_mass"] = np.zeros(len(arr))
    return out


def mms_generate(spec: MmsSpec, out_dir, consts: ModelConstants = ModelConstants(), re_list=None) -> list:
    """Write ``mms_re{Re}.csv`` and ``mms_re{Re}.sources.csv`` per Reynolds number; return the cloud paths."""
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for Re in spec.re_list if re_list is None else re_list:
        cloud, src = mms_cloud(spec, Re, consts)
        stem = f"mms_re{Re:g}"
        save_point_cloud(cloud, out / f"{stem}.csv")
        save_sources(out / f"{stem}.sources.csv", cloud.xy[:, 0], cloud.xy[:, 1], src)
        paths.append(out / f"{stem}.csv")
    return paths

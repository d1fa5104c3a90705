"""Flat TOML run configuration. Every key is documented here; unknown keys are errors.

Training file keys:

==================  =====================================================
clouds              list of point-cloud CSV paths (relative to the file)
data_dir            alternative: directory whose ``*.csv`` clouds are used
out_dir             output directory (default ``run``)
hidden              hidden-layer widths, e.g. ``[64, 64, 64]``
budget              total per-cloud sampling budget split over zones
inlet_velocity      normalized inlet / freestream velocity target
(trainer keys)      any :class:`~ranspinn.trainer.TrainConfig` field
(constants)         any :class:`~ranspinn.physics.ModelConstants` field
==================  =====================================================

Source files are picked up as ``<stem>.sources.csv`` next to each cloud. The
MMS file takes :class:`~ranspinn.workbench.mms.MmsSpec` fields plus
``out_dir``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import tomli

from ..net import DEFAULT_HIDDEN
from ..physics import ModelConstants
from ..trainer import TrainConfig
from .mms import MmsSpec


class ConfigError(ValueError):
    pass


RUN_KEYS = ("clouds", "data_dir", "out_dir", "hidden", "budget", "inlet_velocity")
TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))
CONST_KEYS = tuple(f.name for f in fields(ModelConstants))
MMS_KEYS = tuple(f.name for f in fields(MmsSpec))


@dataclass
class RunConfig:
    clouds: list
    out_dir: Path
    hidden: tuple = DEFAULT_HIDDEN
    budget: int = 3000
    inlet_velocity: float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)
    consts: ModelConstants = field(default_factory=ModelConstants)

    def resolved(self) -> dict:
        """Every setting, defaults included, as plain values (for logging)."""
        return {
            "clouds": [str(c) for c in self.clouds],
            "out_dir": str(self.out_dir),
            "hidden": list(self.hidden),
            "budget": self.budget,
            "inlet_velocity": self.inlet_velocity,
            **asdict(self.train),
            **asdict(self.consts),
        }


def read_toml(path) -> dict:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from None


def _check_flat(doc: dict, allowed, path):
    nested = [k for k, v in doc.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: configuration must be flat; tables found for {nested}")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown configuration key(s) {unknown}")


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    doc = read_toml(path)
    _check_flat(doc, RUN_KEYS + TRAIN_KEYS + CONST_KEYS, path)
    doc.update(overrides or {})
    base = path.parent
    if "clouds" in doc and "data_dir" in doc:
        raise ConfigError(f"{path}: give either clouds or data_dir, not both")
    if "clouds" in doc:
        clouds = [base / c for c in doc["clouds"]]
    elif "data_dir" in doc:
        d = base / doc["data_dir"]
        clouds = sorted(p for p in d.glob("*.csv") if not p.name.endswith(".sources.csv"))
    else:
        raise ConfigError(f"{path}: no training data (set clouds or data_dir)")
    if not clouds:
        raise ConfigError(f"{path}: no point-cloud files found")
    try:
        train = TrainConfig(**{k: doc[k] for k in TRAIN_KEYS if k in doc})
        consts = ModelConstants(**{k: doc[k] for k in CONST_KEYS if k in doc})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    hidden = tuple(int(h) for h in doc.get("hidden", DEFAULT_HIDDEN))
    if not hidden or min(hidden) <= 0:
        raise ConfigError(f"{path}: hidden widths must be positive")
    budget = int(doc.get("budget", 3000))
    if budget <= 0:
        raise ConfigError(f"{path}: budget must be positive")
    return RunConfig(
        clouds=clouds,
        out_dir=base / doc.get("out_dir", "run"),
        hidden=hidden,
        budget=budget,
        inlet_velocity=float(doc.get("inlet_velocity", 1.0)),
        train=train,
        consts=consts,
    )


def load_mms_spec(path) -> tuple[MmsSpec, Path]:
    path = Path(path)
    doc = read_toml(path)
    _check_flat(doc, MMS_KEYS + ("out_dir",), path)
    out = path.parent / doc.pop("out_dir", "mms_data")
    for key in ("domain", "re_list", "zones"):
        if key in doc:
            doc[key] = tuple(doc[key])
    try:
        return MmsSpec(**doc).validate(), out
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None

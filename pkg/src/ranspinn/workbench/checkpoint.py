"""Versioned single-file checkpoints.

Layout: one ASCII header line ``RANSPINN-CHECKPOINT v1``, then a JSON body.
Float arrays are stored as base64 of little-endian float64 bytes, so they
round-trip bit-exactly; scalars use ``repr`` (exact for float64). The body
carries a sha256 of its own payload for corruption detection.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..net import DenseNet, InputScaling, NetworkEnsemble
from ..physics import FIELDS, ModelConstants, RefScales

MAGIC = "RANSPINN-CHECKPOINT"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, corrupt or incompatible checkpoint."""


@dataclass
class Checkpoint:
    ensemble: NetworkEnsemble
    consts: ModelConstants = field(default_factory=ModelConstants)
    refs: RefScales = field(default_factory=RefScales)
    provenance: dict = field(default_factory=dict)
    lambdas: tuple = (0.0, 0.0, 0.0, 0.0)
    epoch: int = 0
    version: int = VERSION


def _enc(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _dec(s: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s.encode("ascii"), validate=True), dtype="<f8").astype(np.float64)


def _payload(ck: Checkpoint) -> dict:
    ens = ck.ensemble
    return {
        "nets": {name: list(ens.nets[name].layer_sizes) for name in FIELDS},
        "params": _enc(ens.params),
        "scaling": {"center": _enc(np.array(ens.scaling.center)), "half_range": _enc(np.array(ens.scaling.half_range))},
        "consts": asdict(ck.consts),
        "refs": asdict(ck.refs),
        "provenance": ck.provenance,
        "lambdas": _enc(np.array(ck.lambdas, dtype=float)),
        "epoch": int(ck.epoch),
    }


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def save_checkpoint(ck: Checkpoint, path) -> None:
    body = _canonical(_payload(ck))
    digest = hashlib.sha256(body.encode()).hexdigest()
    Path(path).write_text(f"{MAGIC} v{VERSION}\n{{\"sha256\":\"{digest}\",\"payload\":{body}}}\n")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise
    except (OSError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None
    head, _, rest = text.partition("\n")
    if not head.startswith(MAGIC + " v"):
        raise CheckpointError(f"{path}: not a checkpoint file (bad header)")
    try:
        version = int(head[len(MAGIC) + 2 :])
    except ValueError:
        raise CheckpointError(f"{path}: malformed version in header {head!r}") from None
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint format v{version} is not supported (expected v{VERSION})")
    try:
        doc = json.loads(rest)
        payload = doc["payload"]
        stored = doc["sha256"]
    except (json.JSONDecodeError, KeyError, TypeError):
        raise CheckpointError(f"{path}: corrupt or truncated checkpoint body") from None
    if hashlib.sha256(_canonical(payload).encode()).hexdigest() != stored:
        raise CheckpointError(f"{path}: checksum mismatch, checkpoint is corrupt")
    try:
        nets = {name: DenseNet(tuple(payload["nets"][name])) for name in FIELDS}
        scaling = InputScaling(
            tuple(float(v) for v in _dec(payload["scaling"]["center"])),
            tuple(float(v) for v in _dec(payload["scaling"]["half_range"])),
        )
        ens = NetworkEnsemble(nets, _dec(payload["params"]), scaling)
        return Checkpoint(
            ens,
            ModelConstants(**payload["consts"]),
            RefScales(**payload["refs"]),
            payload["provenance"],
            tuple(float(v) for v in _dec(payload["lambdas"])),
            int(payload["epoch"]),
            version,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: inconsistent checkpoint contents ({exc})") from None

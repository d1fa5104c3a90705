"""Two-phase training: per-network warm start on data, then joint data + PDE loss.

Schedule by epoch index ``e``:

* ``e < warmstart_end``: each field network is updated by its own data (and
  boundary) loss with its own Adam state; PDE terms are reported as 0.
* ``warmstart_end <= e < eps_pde_start``: joint updates on the full loss; the
  PDE weights are calibrated once to the inverse of the unweighted component
  losses and then frozen; the epsilon PDE term is reported with weight 0.
* ``e >= eps_pde_start``: the epsilon weight is calibrated the same way and
  the epsilon PDE term joins the loss.

Gradients of a mini-batch are accumulated over fixed-size point chunks and
summed in chunk order, so results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .autodiff import ParamTape
from .autodiff import tape as ad
from .net import NetworkEnsemble, ensemble_predict
from .physics import FIELDS, ModelConstants, SourceTerms, pde_residuals
from .sampler import TrainingSet

__all__ = [
    "AdamState",
    "LossBreakdown",
    "LossHistory",
    "Phase",
    "TrainConfig",
    "TrainingDiverged",
    "adam_step",
    "calibrate_weights",
    "data_loss",
    "learning_rate",
    "batch_gradient",
    "pde_components",
    "pde_loss",
    "phase_of",
    "train",
]

log = logging.getLogger(__name__)

LAMBDA_CAP_FLOOR = 1e-12


class Phase(str, enum.Enum):
    WARM_START = "WarmStart"
    PDE_NO_EPS = "PdeNoEps"
    FULL = "Full"


class TrainingDiverged(RuntimeError):
    """Non-finite loss. ``ensemble`` holds the last finite parameters."""

    def __init__(self, message, ensemble, history):
        super().__init__(message)
        self.ensemble = ensemble
        self.history = history


@dataclass
class TrainConfig:
    epochs: int = 60
    warmstart_end: int | None = None  # default 20% of epochs
    eps_pde_start: int | None = None  # default 40% of epochs
    batch_size: int = 64
    lr0: float = 1e-3
    decay: float = 0.95
    decay_interval: float | None = None  # steps; None = one epoch
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eps_log_delta: float = 1e-12
    lambda_policy: str = "calibrate"  # or "unit": all weights 1
    calib_size: int = 1024
    chunk_size: int = 256
    workers: int = 1

    def __post_init__(self):
        if self.warmstart_end is None:
            self.warmstart_end = max(1, round(0.2 * self.epochs))
        if self.eps_pde_start is None:
            self.eps_pde_start = max(self.warmstart_end + 1, round(0.4 * self.epochs))
        self.validate()

    def validate(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.epochs > 0 and not (0 < self.warmstart_end < self.eps_pde_start <= self.epochs):
            raise ValueError(
                "need 0 < warmstart_end < eps_pde_start <= epochs, got "
                f"{self.warmstart_end}, {self.eps_pde_start}, {self.epochs}"
            )
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.decay_interval is not None and not self.decay_interval > 0:
            raise ValueError("decay_interval must be positive")
        if self.batch_size <= 0 or self.chunk_size <= 0 or self.workers <= 0 or self.calib_size <= 0:
            raise ValueError("batch_size, chunk_size, workers and calib_size must be positive")
        if self.lambda_policy not in ("calibrate", "unit"):
            raise ValueError(f"unknown lambda_policy {self.lambda_policy!r}")
        if not self.eps_log_delta >= 0:
            raise ValueError("eps_log_delta must be nonnegative")


def phase_of(epoch: int, config: TrainConfig) -> Phase:
    if epoch < config.warmstart_end:
        return Phase.WARM_START
    if epoch < config.eps_pde_start:
        return Phase.PDE_NO_EPS
    return Phase.FULL


# ----------------------------------------------------------------------------
# Loss bookkeeping

DATA_KEYS = ("L_u", "L_v", "L_p", "L_k", "L_eps_data")
PDE_KEYS = ("L_NS", "L_Cont", "L_k_pde", "L_eps_pde")


@dataclass
class LossBreakdown:
    L_u: float = 0.0
    L_v: float = 0.0
    L_p: float = 0.0
    L_k: float = 0.0
    L_eps_data: float = 0.0
    L_BC: float = 0.0
    L_NS: float = 0.0
    L_Cont: float = 0.0
    L_k_pde: float = 0.0
    L_eps_pde: float = 0.0
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    lambda4: float = 0.0

    @property
    def total(self) -> float:
        return (
            self.L_u
            + self.L_v
            + self.L_p
            + self.L_k
            + self.L_eps_data
            + self.L_BC
            + self.lambda1 * self.L_NS
            + self.lambda2 * self.L_Cont
            + self.lambda3 * self.L_k_pde
            + self.lambda4 * self.L_eps_pde
        )


HISTORY_COLUMNS = (
    "epoch,phase,L_u,L_v,L_p,L_k,L_eps_data,L_BC,L_NS,L_Cont,L_k_pde,L_eps_pde,"
    "lambda1,lambda2,lambda3,lambda4,lr,total"
).split(",")


@dataclass
class LossHistory:
    rows: list = field(default_factory=list)  # (epoch, phase, LossBreakdown, lr)
    calibrations: list = field(default_factory=list)

    def append(self, epoch: int, phase: Phase, losses: LossBreakdown, lr: float):
        self.rows.append((epoch, phase, losses, lr))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if name == "total":
            return np.array([r[2].total for r in self.rows])
        if name == "lr":
            return np.array([r[3] for r in self.rows])
        return np.array([getattr(r[2], name) for r in self.rows])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_COLUMNS)
            for epoch, phase, lb, lr in self.rows:
                vals = [getattr(lb, c) for c in HISTORY_COLUMNS[2:-2]]
                w.writerow([epoch, phase.value, *(repr(float(v)) for v in vals), repr(float(lr)), repr(float(lb.total))])


# ----------------------------------------------------------------------------
# Loss terms (sums divided by a given count, so chunks add up to batch means)


def _sq(x):
    return x * x


def _sum(x):
    return x.sum() if isinstance(x, ad.Var) else np.sum(x)


def _log_eps(pred, delta):
    return ad.log(pred + delta) if delta > 0 else ad.log(pred)


def _field_data_term(name, pred, truth, delta, n):
    if name == "eps":
        if np.any(truth < 0):
            raise ValueError("negative epsilon in ground truth")
        diff = _log_eps(pred, delta) - np.log(truth + delta)
    else:
        diff = pred - truth
    return _sum(_sq(diff)) * (1.0 / n)


def data_loss(ens: NetworkEnsemble, points, truth, delta: float = 1e-12) -> dict:
    """Per-field data losses: MSE for u, v, p, k; log-space MSE for epsilon."""
    pred = ens.predict(points)
    n = max(len(points), 1)
    return {name: float(_field_data_term(name, pred[name], np.asarray(truth[name]), delta, n)) for name in FIELDS}


def _pde_terms(rs, n):
    rx, ry, rc, rk, re = rs
    return {
        "L_NS": (_sum(_sq(rx)) + _sum(_sq(ry))) * (0.5 / n),
        "L_Cont": _sum(_sq(rc)) * (1.0 / n),
        "L_k_pde": _sum(_sq(rk)) * (1.0 / n),
        "L_eps_pde": _sum(ad.log(1.0 + _sq(re))) * (1.0 / n),
    }


def _sources(src: dict | None, idx) -> SourceTerms:
    if src is None:
        return SourceTerms()
    return SourceTerms(**{k: np.asarray(v)[idx] for k, v in src.items()})


def pde_loss(
    ens: NetworkEnsemble,
    points,
    phase: Phase = Phase.FULL,
    sources: dict | None = None,
    consts: ModelConstants = ModelConstants(),
) -> dict:
    """Unweighted PDE components over a collocation batch.

    Momentum pools both components; epsilon uses ``mean(ln(1 + r**2))``. In
    the warm start all four are reported as 0 and nothing is evaluated.
    """
    if phase == Phase.WARM_START:
        return {k: 0.0 for k in PDE_KEYS}
    pts = np.asarray(points, dtype=float)
    return pde_components(ensemble_predict(ens, pts), phase, sources, consts)


def pde_components(state, phase: Phase = Phase.FULL, sources: dict | None = None, consts: ModelConstants = ModelConstants()) -> dict:
    """Same as :func:`pde_loss` for a ready-made flow state of jets."""
    if phase == Phase.WARM_START:
        return {k: 0.0 for k in PDE_KEYS}
    rs = pde_residuals(state, consts, _sources(sources, slice(None)))
    n = max(int(np.size(np.asarray(ad.value_of(state.u.value)))), 1)
    return {k: float(v) for k, v in _pde_terms(rs, n).items()}


def calibrate_weights(components) -> tuple:
    """Inverse-residual weights ``1 / max(L_i, 1e-12)`` for ``(L_NS, L_Cont, L_k, L_eps)``."""
    if isinstance(components, dict):
        components = [components[k] for k in PDE_KEYS]
    return tuple(1.0 / max(float(c), LAMBDA_CAP_FLOOR) for c in components)


# ----------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def learning_rate(step: int, config: TrainConfig, interval: float | None = None) -> float:
    """``lr0 * decay ** floor(step / interval)``."""
    interval = config.decay_interval if interval is None else interval
    if interval is None or math.isinf(interval):
        return config.lr0
    return config.lr0 * config.decay ** math.floor(step / interval)


def adam_step(params, grads, state: AdamState, config: TrainConfig, interval: float | None = None):
    """One Adam update with the decayed step size. Returns ``(new_params, new_state)``."""
    t = state.step
    lr = learning_rate(t, config, interval)
    m = config.beta1 * state.m + (1.0 - config.beta1) * grads
    v = config.beta2 * state.v + (1.0 - config.beta2) * grads * grads
    m_hat = m / (1.0 - config.beta1 ** (t + 1))
    v_hat = v / (1.0 - config.beta2 ** (t + 1))
    new = params - lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return new, AdamState(m, v, t + 1)


# ----------------------------------------------------------------------------
# Gradient evaluation over chunks


def _chunks(idx: np.ndarray, size: int):
    return [idx[i : i + size] for i in range(0, len(idx), size)]


class _Evaluator:
    def __init__(self, ens: NetworkEnsemble, data: TrainingSet, config: TrainConfig, consts: ModelConstants):
        self.ens = ens
        self.data = data
        self.config = config
        self.consts = consts
        self.sl = ens.slices()
        self.pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def _map(self, fn, tasks):
        if self.pool is None:
            return [fn(t) for t in tasks]
        return list(self.pool.map(fn, tasks))

    @staticmethod
    def _reduce(results, n_params):
        grad = np.zeros(n_params)
        terms: dict = {}
        for g, t in results:
            grad += g
            for k, v in t.items():
                terms[k] = terms.get(k, 0.0) + v
        return grad, terms

    def _bc_terms(self, name, pred_fn, vel_idx, p_idx):
        b = self.data.boundary
        out = {}
        if name in ("u", "v") and len(vel_idx):
            col = 0 if name == "u" else 1
            pred = pred_fn(name, b.velocity_points[vel_idx])
            out["L_BC"] = _sum(_sq(pred - b.velocity_targets[vel_idx, col])) * (1.0 / len(vel_idx))
        if name == "p" and len(p_idx):
            pred = pred_fn(name, b.pressure_points[p_idx])
            out["L_BC"] = _sum(_sq(pred - b.pressure_targets[p_idx])) * (1.0 / len(p_idx))
        return out

    # -- warm start: one field network at a time ------------------------------
    def field_grad(self, name, params_seg, batch, vel_idx, p_idx):
        ens, data, cfg = self.ens, self.data, self.config
        key = DATA_KEYS[FIELDS.index(name)]
        n = len(batch)
        truth = data.truth[name]

        def chunk_task(chunk):
            tape = ParamTape(params_seg)
            pred = ens.field_output(name, data.points[chunk], tape.params)
            term = _field_data_term(name, pred, truth[chunk], cfg.eps_log_delta, n)
            return self._finish(tape, {key: term})

        def bc_task(_):
            tape = ParamTape(params_seg)
            terms = self._bc_terms(name, lambda f, pts: ens.field_output(f, pts, tape.params), vel_idx, p_idx)
            return self._finish(tape, terms)

        tasks = [("c", c) for c in _chunks(batch, cfg.chunk_size)] + [("b", None)]
        results = self._map(lambda t: chunk_task(t[1]) if t[0] == "c" else bc_task(None), tasks)
        return self._reduce(results, len(params_seg))

    # -- joint phase ------------------------------------------------------------
    def joint_grad(self, params, batch, vel_idx, p_idx, weights):
        ens, data, cfg = self.ens, self.data, self.config
        n = len(batch)
        has_truth = data.truth is not None

        def chunk_task(chunk):
            tape = ParamTape(params)
            state = ensemble_predict(ens, data.points[chunk], tape.params)
            terms = {}
            if has_truth:
                for name, key in zip(FIELDS, DATA_KEYS):
                    terms[key] = _field_data_term(
                        name, state.field(name).value, data.truth[name][chunk], cfg.eps_log_delta, n
                    )
            rs = pde_residuals(state, self.consts, _sources(data.sources, chunk))
            terms.update(_pde_terms(rs, n))
            return self._finish(tape, terms, weights)

        def bc_task(_):
            tape = ParamTape(params)
            theta = tape.params
            terms = {}
            for name in ("u", "v", "p"):
                t = self._bc_terms(name, lambda f, pts: ens.field_output(f, pts, theta[self.sl[f]]), vel_idx, p_idx)
                if t:
                    terms[name] = t["L_BC"]
            bc = None
            for v in terms.values():
                bc = v if bc is None else bc + v
            return self._finish(tape, {"L_BC": bc} if bc is not None else {})

        tasks = [("c", c) for c in _chunks(batch, cfg.chunk_size)] + [("b", None)]
        results = self._map(lambda t: chunk_task(t[1]) if t[0] == "c" else bc_task(None), tasks)
        return self._reduce(results, len(params))

    @staticmethod
    def _finish(tape, terms, weights=None):
        """Backpropagate the weighted sum of the recorded terms; return (grad, term values)."""
        values = {k: float(ad.value_of(v)) for k, v in terms.items()}
        total = None
        for k, v in terms.items():
            w = 1.0 if weights is None else weights.get(k, 1.0)
            if w == 0.0 or not isinstance(v, ad.Var):
                continue
            contrib = v if w == 1.0 else v * w
            total = contrib if total is None else total + contrib
        if total is None:
            return np.zeros_like(tape.grad), values
        return tape.backward(total).copy(), values


# ----------------------------------------------------------------------------
# Training loop


def _calibration_batch(data: TrainingSet, config: TrainConfig) -> np.ndarray:
    rng = np.random.default_rng([config.seed, 1])
    return np.sort(rng.permutation(len(data))[: config.calib_size])


def _unweighted_pde(ens, data, idx, consts):
    src = {k: np.asarray(v)[idx] for k, v in data.sources.items()} if data.sources is not None else None
    return pde_loss(ens, data.points[idx], Phase.FULL, src, consts)


def _effective_weights(phase: Phase, lambdas) -> dict:
    eff = [0.0] * 4 if phase == Phase.WARM_START else list(lambdas)
    if phase == Phase.PDE_NO_EPS:
        eff[3] = 0.0
    return dict(zip(PDE_KEYS, eff))


def batch_gradient(
    ens: NetworkEnsemble,
    data: TrainingSet,
    config: TrainConfig,
    phase: Phase,
    lambdas=(1.0, 1.0, 1.0, 1.0),
    consts: ModelConstants = ModelConstants(),
    batch=None,
):
    """Gradient of the phase objective over ``batch`` (default: every point and boundary target).

    In the warm start this is the concatenation of each member's own-loss
    gradient. Returns ``(gradient, term values)``.
    """
    ev = _Evaluator(ens, data, config, consts)
    batch = np.arange(len(data)) if batch is None else np.asarray(batch)
    vel = np.arange(len(data.boundary.velocity_points))
    pre = np.arange(len(data.boundary.pressure_points))
    try:
        if phase == Phase.WARM_START:
            sl = ens.slices()
            grad = np.zeros_like(ens.params)
            terms: dict = {}
            for name in FIELDS:
                g, t = ev.field_grad(name, ens.params[sl[name]], batch, vel, pre)
                grad[sl[name]] = g
                for k, v in t.items():
                    terms[k] = terms.get(k, 0.0) + v
            return grad, terms
        return ev.joint_grad(ens.params, batch, vel, pre, _effective_weights(phase, lambdas))
    finally:
        ev.close()


def train(
    config: TrainConfig,
    data: TrainingSet,
    ensemble: NetworkEnsemble,
    consts: ModelConstants = ModelConstants(),
    on_epoch=None,
):
    """Run the full schedule. Returns ``(trained ensemble, LossHistory)``.

    The input ensemble is not modified. ``on_epoch(epoch, ensemble, history)``
    is called after every epoch. Raises :class:`TrainingDiverged` (carrying
    the last finite ensemble) on a non-finite loss.
    """
    history = LossHistory()
    ens = ensemble.copy()
    if config.epochs == 0:
        return ens, history
    if data.truth is None:
        raise ValueError("training needs ground-truth data for the warm start")
    if len(data) == 0:
        raise ValueError("empty training set")

    n = len(data)
    n_batches = math.ceil(n / config.batch_size)
    interval = config.decay_interval if config.decay_interval is not None else n_batches
    rng = np.random.default_rng(config.seed)
    evaluator = _Evaluator(ens, data, config, consts)
    sl = ens.slices()
    field_states = {name: AdamState.zeros(sl[name].stop - sl[name].start) for name in FIELDS}
    joint_state = AdamState.zeros(len(ens.params))
    lambdas = [0.0, 0.0, 0.0, 0.0]
    calib_idx = _calibration_batch(data, config)
    b = data.boundary

    try:
        for epoch in range(config.epochs):
            phase = phase_of(epoch, config)
            if epoch == config.warmstart_end:
                comps = _unweighted_pde(ens, data, calib_idx, consts)
                lambdas = list(calibrate_weights(comps)) if config.lambda_policy == "calibrate" else [1.0] * 4
                history.calibrations.append({"epoch": epoch, "components": comps, "lambdas": tuple(lambdas)})
                log.info("epoch %d: PDE weights calibrated to %s", epoch, lambdas)
            if epoch == config.eps_pde_start and config.lambda_policy == "calibrate":
                comps = _unweighted_pde(ens, data, calib_idx, consts)
                lambdas[3] = calibrate_weights(comps)[3]
                history.calibrations.append({"epoch": epoch, "components": comps, "lambdas": tuple(lambdas)})
                log.info("epoch %d: epsilon PDE weight calibrated to %g", epoch, lambdas[3])

            weights = _effective_weights(phase, lambdas)
            eff = [weights[k] for k in PDE_KEYS]

            perm = rng.permutation(n)
            vel_perm = rng.permutation(len(b.velocity_points))
            p_perm = rng.permutation(len(b.pressure_points))
            batches = np.array_split(perm, n_batches)
            vel_batches = np.array_split(vel_perm, n_batches)
            p_batches = np.array_split(p_perm, n_batches)

            acc = {k: 0.0 for k in DATA_KEYS + ("L_BC",) + PDE_KEYS}
            lr_epoch = None
            for batch, vb, pb in zip(batches, vel_batches, p_batches):
                if phase == Phase.WARM_START:
                    new_params = ens.params.copy()
                    step_terms = {}
                    for name in FIELDS:
                        seg = ens.params[sl[name]]
                        grad, terms = evaluator.field_grad(name, seg, batch, vb, pb)
                        _check_finite(terms, grad, ens, history, epoch)
                        st = field_states[name]
                        if lr_epoch is None:
                            lr_epoch = learning_rate(st.step, config, interval)
                        new_params[sl[name]], field_states[name] = adam_step(seg, grad, st, config, interval)
                        for k, v in terms.items():
                            step_terms[k] = step_terms.get(k, 0.0) + v
                    ens.params = new_params
                else:
                    grad, step_terms = evaluator.joint_grad(ens.params, batch, vb, pb, weights)
                    _check_finite(step_terms, grad, ens, history, epoch)
                    if lr_epoch is None:
                        lr_epoch = learning_rate(joint_state.step, config, interval)
                    ens.params, joint_state = adam_step(ens.params, grad, joint_state, config, interval)
                for k, v in step_terms.items():
                    acc[k] += v

            if phase == Phase.WARM_START:
                for k in PDE_KEYS:
                    acc[k] = 0.0
            lb = LossBreakdown(
                **{k: acc[k] / n_batches for k in acc},
                lambda1=eff[0],
                lambda2=eff[1],
                lambda3=eff[2],
                lambda4=eff[3],
            )
            history.append(epoch, phase, lb, lr_epoch)
            if epoch % 10 == 0 or epoch == config.epochs - 1:
                log.info("epoch %d %s total %.4e", epoch, phase.value, lb.total)
            if on_epoch is not None:
                on_epoch(epoch, ens, history)
    finally:
        evaluator.close()
    return ens, history


def _check_finite(terms, grad, ens, history, epoch):
    bad = [k for k, v in terms.items() if not np.isfinite(v)]
    if bad or not np.all(np.isfinite(grad)):
        raise TrainingDiverged(
            f"non-finite loss at epoch {epoch}: {', '.join(bad) or 'gradient'}", ens.copy(), history
        )


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)


TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))

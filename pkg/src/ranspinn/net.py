"""Dense tanh networks and the five-network flow ensemble.

Flat parameter layout of a :class:`DenseNet` with sizes ``[n0, n1, ..., nL]``:
for each layer ``i`` the weight matrix ``W_i`` of shape ``(n_i, n_{i+1})`` in
row-major order, immediately followed by the bias ``b_i`` of length
``n_{i+1}``. A layer computes ``h @ W_i + b_i``; tanh follows every layer
except the last.

The ensemble concatenates the five member vectors in the order
``u, v, p, k, eps``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Jet2, lift
from .autodiff import tape as ad
from .physics import FIELDS, FlowState

__all__ = [
    "DenseNet",
    "InputScaling",
    "NetworkEnsemble",
    "ensemble_predict",
    "eval_spatial_jets",
    "init_params",
]

DEFAULT_HIDDEN = (64, 64, 64)


def _check_sizes(layer_sizes: Sequence[int]) -> tuple[int, ...]:
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 2 or any(n <= 0 for n in sizes) or any(int(n) != n for n in layer_sizes):
        raise ValueError(f"layer sizes must be >= 2 positive integers, got {list(layer_sizes)}")
    return sizes


def n_params(layer_sizes: Sequence[int]) -> int:
    s = _check_sizes(layer_sizes)
    return sum(a * b + b for a, b in zip(s[:-1], s[1:]))


def init_params(layer_sizes: Sequence[int], seed: int) -> np.ndarray:
    """Glorot-uniform weights and zero biases, fully determined by ``seed``."""
    sizes = _check_sizes(layer_sizes)
    rng = np.random.default_rng(seed)
    chunks = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (a + b))
        chunks.append(rng.uniform(-limit, limit, size=a * b))
        chunks.append(np.zeros(b))
    return np.concatenate(chunks)


def _affine(h, W, b):
    if isinstance(h, Jet2):
        derivs = [0.0 if (type(c) is float and c == 0.0) else c @ W for c in h.components[1:]]
        return Jet2(h.value @ W + b, *derivs)
    return h @ W + b


def _tanh(h):
    return lift("tanh", h) if isinstance(h, Jet2) else ad.tanh(h)


def _first_column(h):
    if isinstance(h, Jet2):
        return Jet2(*(c if type(c) is float else c[..., 0] for c in h.components))
    return h[..., 0]


@dataclass(frozen=True)
class DenseNet:
    layer_sizes: tuple

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", _check_sizes(self.layer_sizes))
        if self.layer_sizes[-1] != 1:
            raise ValueError("a field network has a single output")

    @property
    def n_params(self) -> int:
        return n_params(self.layer_sizes)

    def unpack(self, params):
        """Split a flat vector (ndarray or tape variable) into ``[(W, b), ...]``."""
        if np.size(ad.value_of(params)) != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {np.size(ad.value_of(params))}")
        layers, off = [], 0
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = params[off : off + a * b].reshape(a, b)
            off += a * b
            layers.append((W, params[off : off + b]))
            off += b
        return layers

    def forward(self, params, inputs):
        """Network output for inputs of shape ``(..., n0)``.

        ``inputs`` may be a :class:`Jet2` whose components have the input
        shape (or broadcast to it); the result is then a jet of the output.
        """
        layers = self.unpack(params)
        h = inputs
        last = len(layers) - 1
        for i, (W, b) in enumerate(layers):
            h = _affine(h, W, b)
            if i < last:
                h = _tanh(h)
        return _first_column(h)


def eval_spatial_jets(net: DenseNet, params, points) -> Jet2:
    """Jet of a single network w.r.t. the first two inputs, third input held passive."""
    pts = np.asarray(points, dtype=float)
    seed = Jet2(pts, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    return net.forward(params, seed)


@dataclass(frozen=True)
class InputScaling:
    """Affine map of ``(x, y, Re)`` onto roughly ``[-1, 1]``: ``(p - center) / half_range``."""

    center: tuple = (0.0, 0.0, 0.0)
    half_range: tuple = (1.0, 1.0, 1.0)

    @classmethod
    def from_points(cls, points) -> "InputScaling":
        pts = np.asarray(points, dtype=float)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        half = (hi - lo) / 2.0
        half = np.where(half > 0, half, np.maximum(np.abs(hi), 1.0))
        return cls(tuple(float(c) for c in (hi + lo) / 2.0), tuple(float(h) for h in half))

    def apply(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - np.asarray(self.center)) / np.asarray(self.half_range)


def _output_transform(name: str, raw):
    if name == "k":
        return lift("softplus", raw) if isinstance(raw, Jet2) else ad.softplus(raw)
    if name == "eps":
        return lift("exp", raw) if isinstance(raw, Jet2) else ad.exp(raw)
    return raw


@dataclass
class NetworkEnsemble:
    """Five field networks sharing the input ``(x, y, Re)``.

    k is predicted through softplus and epsilon through exp, so both are
    strictly positive and the epsilon network works in log space.
    """

    nets: Mapping[str, DenseNet]
    params: np.ndarray
    scaling: InputScaling = field(default_factory=InputScaling)

    def __post_init__(self):
        if tuple(self.nets) != FIELDS:
            raise ValueError(f"ensemble needs nets for {FIELDS} in that order")
        self.params = np.asarray(self.params, dtype=np.float64)
        total = sum(n.n_params for n in self.nets.values())
        if self.params.shape != (total,):
            raise ValueError(f"expected a flat vector of {total} parameters, got shape {self.params.shape}")

    @classmethod
    def create(cls, hidden=DEFAULT_HIDDEN, seed: int = 0, scaling: InputScaling | None = None, layer_sizes=None):
        """Fresh ensemble; ``layer_sizes`` (a mapping per field) overrides ``hidden``."""
        if layer_sizes is None:
            layer_sizes = {name: (3, *hidden, 1) for name in FIELDS}
        nets = {name: DenseNet(tuple(layer_sizes[name])) for name in FIELDS}
        seeds = np.random.SeedSequence(seed).generate_state(len(FIELDS))
        params = np.concatenate([init_params(nets[n].layer_sizes, int(s)) for n, s in zip(FIELDS, seeds)])
        return cls(nets, params, scaling or InputScaling())

    def slices(self) -> dict:
        out, off = {}, 0
        for name in FIELDS:
            n = self.nets[name].n_params
            out[name] = slice(off, off + n)
            off += n
        return out

    def copy(self) -> "NetworkEnsemble":
        return NetworkEnsemble(dict(self.nets), self.params.copy(), self.scaling)

    def input_jet(self, points) -> Jet2:
        inv = 1.0 / np.asarray(self.scaling.half_range)
        return Jet2(self.scaling.apply(points), np.array([inv[0], 0.0, 0.0]), np.array([0.0, inv[1], 0.0]))

    def field_output(self, name: str, points, params=None, jets: bool = False):
        """Transformed output of one member; ``params`` is that member's own vector."""
        if params is None:
            params = self.params[self.slices()[name]]
        inputs = self.input_jet(points) if jets else self.scaling.apply(points)
        return _output_transform(name, self.nets[name].forward(params, inputs))

    def predict(self, points, params=None) -> dict:
        """Plain field values ``{u, v, p, k, eps}`` at points of shape ``(N, 3)``."""
        theta = self.params if params is None else params
        sl = self.slices()
        return {name: self.field_output(name, points, theta[sl[name]]) for name in FIELDS}


def ensemble_predict(ens: NetworkEnsemble, points, params=None) -> FlowState:
    """Flow state with spatial jets of all five fields at points ``(N, 3)``.

    ``params`` may be a tape variable over the whole ensemble vector.
    """
    theta = ens.params if params is None else params
    pts = np.asarray(points, dtype=float)
    inputs = ens.input_jet(pts)
    sl = ens.slices()
    jets = {}
    for name in FIELDS:
        raw = ens.nets[name].forward(theta[sl[name]], inputs)
        jets[name] = _output_transform(name, raw)
    return FlowState(**jets, x=pts[..., 0], y=pts[..., 1], Re=pts[..., 2])

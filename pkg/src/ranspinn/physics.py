"""Nondimensional incompressible RANS equations with a k-epsilon closure.

Residual operators take a :class:`FlowState` whose fields are :class:`Jet2`
objects, so they work unchanged on analytic fields, on network predictions
evaluated with plain arrays, and on tape variables during training.
All quantities are nondimensional: lengths by ``L``, velocities by the inlet
velocity, pressure and k by ``2 rho u_inlet**2`` and epsilon by
``u_inlet**3 / L``, with ``rho = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any, Mapping

import numpy as np

from .autodiff import Jet2, jet_maximum
from .autodiff.tape import maximum

__all__ = [
    "FlowState",
    "ModelConstants",
    "RefScales",
    "SourceTerms",
    "continuity_residual",
    "dimensionalize",
    "eps_residual",
    "k_residual",
    "momentum_residual",
    "nondimensionalize",
    "pde_residuals",
    "production_term",
    "turbulent_viscosity",
]

FIELDS = ("u", "v", "p", "k", "eps")


@dataclass(frozen=True)
class RefScales:
    """Reference scales. ``mu`` is a kinematic viscosity so that Re is dimensionless."""

    L: float = 1.0
    u_inlet: float = 1.0
    mu: float = 1.0
    rho: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"reference scale {f.name} must be positive, got {v!r}")

    @property
    def Re(self) -> float:
        return self.u_inlet * self.L / self.mu


@dataclass(frozen=True)
class ModelConstants:
    C1: float = 1.44
    C2: float = 1.92
    sigma_k: float = 1.0
    sigma_eps: float = 1.3
    C_mu: float = 0.09
    k_floor: float = 1e-8
    eps_floor: float = 1e-8
    # "printed": -(C1 Pk + C2 eps) eps/k ; "standard": -C1 Pk eps/k + C2 eps^2/k
    eps_sink: str = "printed"

    def __post_init__(self):
        if self.k_floor <= 0 or self.eps_floor <= 0:
            raise ValueError("k_floor and eps_floor must be positive")
        if self.eps_sink not in ("printed", "standard"):
            raise ValueError(f"eps_sink must be 'printed' or 'standard', got {self.eps_sink!r}")


@dataclass(frozen=True)
class SourceTerms:
    """Manufactured-solution forcing subtracted from each residual (scalars or per-point arrays)."""

    s_mass: Any = 0.0
    s_momx: Any = 0.0
    s_momy: Any = 0.0
    s_k: Any = 0.0
    s_eps: Any = 0.0

    @classmethod
    def from_mapping(cls, m: Mapping[str, Any]) -> "SourceTerms":
        return cls(**{k: m[k] for k in ("s_mass", "s_momx", "s_momy", "s_k", "s_eps") if k in m})


ZERO_SOURCES = SourceTerms()


@dataclass(frozen=True)
class FlowState:
    u: Jet2
    v: Jet2
    p: Jet2
    k: Jet2
    eps: Jet2
    x: Any = None
    y: Any = None
    Re: Any = 1.0

    def field(self, name: str) -> Jet2:
        return getattr(self, name)


# ----------------------------------------------------------------------------
# Nondimensionalisation


def nondimensionalize(sample: Mapping[str, Any], refs: RefScales) -> dict:
    """Scale a raw sample (any subset of x, y, u, v, p, k, eps) to nondimensional form."""
    q = 2.0 * refs.rho * refs.u_inlet**2
    scale = {
        "x": refs.L,
        "y": refs.L,
        "u": refs.u_inlet,
        "v": refs.u_inlet,
        "p": q,
        "k": q,
        "eps": refs.u_inlet**3 / refs.L,
    }
    return {name: np.asarray(val) / scale[name] if name in scale else val for name, val in sample.items()}


def dimensionalize(sample: Mapping[str, Any], refs: RefScales) -> dict:
    q = 2.0 * refs.rho * refs.u_inlet**2
    scale = {
        "x": refs.L,
        "y": refs.L,
        "u": refs.u_inlet,
        "v": refs.u_inlet,
        "p": q,
        "k": q,
        "eps": refs.u_inlet**3 / refs.L,
    }
    return {name: np.asarray(val) * scale[name] if name in scale else val for name, val in sample.items()}


# ----------------------------------------------------------------------------
# Closure


def turbulent_viscosity(k, eps, consts: ModelConstants = ModelConstants()):
    """Eddy viscosity ``C_mu max(k, k_floor)**2 / max(eps, eps_floor)``.

    Accepts plain values or jets; with jets the result carries spatial
    derivatives, which the diffusion terms need.
    """
    if isinstance(k, Jet2) or isinstance(eps, Jet2):
        k = k if isinstance(k, Jet2) else Jet2(k)
        eps = eps if isinstance(eps, Jet2) else Jet2(eps)
        kf = jet_maximum(k, consts.k_floor)
        ef = jet_maximum(eps, consts.eps_floor)
        return (kf * kf).scale(consts.C_mu) / ef
    kf = np.maximum(k, consts.k_floor)
    ef = np.maximum(eps, consts.eps_floor)
    return consts.C_mu * kf * kf / ef


def _val(nu_t):
    return nu_t.value if isinstance(nu_t, Jet2) else nu_t


def production_term(state: FlowState, nu_t):
    """Shear production ``nu_t [2 u_x^2 + 2 v_y^2 + (u_y + v_x)^2]``."""
    u, v = state.u, state.v
    shear = u.dy + v.dx
    return _val(nu_t) * (2.0 * (u.dx * u.dx) + 2.0 * (v.dy * v.dy) + shear * shear)


# ----------------------------------------------------------------------------
# Residuals


def continuity_residual(state: FlowState, src: SourceTerms = ZERO_SOURCES):
    return state.u.dx + state.v.dy - src.s_mass


def momentum_residual(state: FlowState, src: SourceTerms = ZERO_SOURCES):
    """Componentwise ``(U.grad)U + grad p - (1/Re) lap U - s``."""
    if np.any(np.asarray(state.Re) <= 0):
        raise ValueError("Reynolds number must be positive")
    inv_re = 1.0 / np.asarray(state.Re, dtype=float)
    u, v, p = state.u, state.v, state.p
    rx = u.value * u.dx + v.value * u.dy + p.dx - inv_re * (u.dxx + u.dyy) - src.s_momx
    ry = u.value * v.dx + v.value * v.dy + p.dy - inv_re * (v.dxx + v.dyy) - src.s_momy
    return rx, ry


def _transport(state: FlowState, phi: Jet2, nu_t: Jet2, sigma: float):
    """Convective flux divergence minus diffusive flux divergence for scalar phi."""
    u, v = state.u, state.v
    conv = u.dx * phi.value + u.value * phi.dx + v.dy * phi.value + v.value * phi.dy
    inv_re = 1.0 / np.asarray(state.Re, dtype=float)
    gamma = inv_re + nu_t.value * (1.0 / sigma)
    diff = gamma * (phi.dxx + phi.dyy) + (1.0 / sigma) * (nu_t.dx * phi.dx + nu_t.dy * phi.dy)
    return conv - diff


def _k_balance(state, nu_t, pk, consts, src):
    return _transport(state, state.k, nu_t, consts.sigma_k) - pk + state.eps.value - src.s_k


def _eps_balance(state, nu_t, pk, consts, src):
    e = state.eps.value
    ratio = e / maximum(state.k.value, consts.k_floor)
    if consts.eps_sink == "printed":
        sink = (consts.C1 * pk + consts.C2 * e) * ratio
    else:
        sink = consts.C1 * pk * ratio - consts.C2 * e * ratio
    return _transport(state, state.eps, nu_t, consts.sigma_eps) - sink - src.s_eps


def k_residual(state: FlowState, consts: ModelConstants = ModelConstants(), src: SourceTerms = ZERO_SOURCES):
    nu_t = turbulent_viscosity(state.k, state.eps, consts)
    return _k_balance(state, nu_t, production_term(state, nu_t), consts, src)


def eps_residual(state: FlowState, consts: ModelConstants = ModelConstants(), src: SourceTerms = ZERO_SOURCES):
    """Epsilon transport residual; the sink sign convention follows ``consts.eps_sink``."""
    nu_t = turbulent_viscosity(state.k, state.eps, consts)
    return _eps_balance(state, nu_t, production_term(state, nu_t), consts, src)


def pde_residuals(state: FlowState, consts: ModelConstants = ModelConstants(), src: SourceTerms = ZERO_SOURCES):
    """All residuals at once, sharing one eddy-viscosity jet.

    Returns ``(r_x, r_y, r_cont, r_k, r_eps)``; each matches the single operator.
    """
    rx, ry = momentum_residual(state, src)
    rc = continuity_residual(state, src)
    nu_t = turbulent_viscosity(state.k, state.eps, consts)
    pk = production_term(state, nu_t)
    return rx, ry, rc, _k_balance(state, nu_t, pk, consts, src), _eps_balance(state, nu_t, pk, consts, src)

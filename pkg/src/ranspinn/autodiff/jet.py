"""Second-order Taylor jets in the two spatial coordinates.

A :class:`Jet2` carries ``(value, dx, dy, dxx, dyy, dxy)``. Components may be
Python floats, ndarrays (vectorised over points) or tape :class:`Var`
objects, so parameter gradients flow through spatial derivatives. The
literal ``0.0`` is a structural zero: arithmetic skips it, which keeps the
seeded input jets cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import tape as ad

__all__ = ["Jet2", "seed_x", "seed_y", "seed_passive", "lift", "jet_maximum"]


def _is0(a) -> bool:
    return type(a) is float and a == 0.0


def _add(a, b):
    if _is0(a):
        return b
    if _is0(b):
        return a
    return a + b


def _sub(a, b):
    if _is0(b):
        return a
    if _is0(a):
        return -b
    return a - b


def _mul(a, b):
    if _is0(a) or _is0(b):
        return 0.0
    return a * b


def _raw(a):
    return ad.value_of(a)


@dataclass(frozen=True, slots=True, eq=False)
class Jet2:
    value: Any
    dx: Any = 0.0
    dy: Any = 0.0
    dxx: Any = 0.0
    dyy: Any = 0.0
    dxy: Any = 0.0

    @property
    def components(self) -> tuple:
        return (self.value, self.dx, self.dy, self.dxx, self.dyy, self.dxy)

    @property
    def laplacian(self):
        return _add(self.dxx, self.dyy)

    # -- linear ops -----------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, Jet2):
            return Jet2(self.value + other, self.dx, self.dy, self.dxx, self.dyy, self.dxy)
        return Jet2(*(_add(a, b) for a, b in zip(self.components, other.components)))

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, Jet2):
            return Jet2(self.value - other, self.dx, self.dy, self.dxx, self.dyy, self.dxy)
        return Jet2(*(_sub(a, b) for a, b in zip(self.components, other.components)))

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Jet2(*(0.0 if _is0(c) else -c for c in self.components))

    def scale(self, c):
        """Multiply every component by a constant (or per-point array)."""
        return Jet2(*(_mul(x, c) for x in self.components))

    # -- products ---------------------------------------------------------------
    def __mul__(self, other):
        if not isinstance(other, Jet2):
            return self.scale(other)
        a, b = self, other
        return Jet2(
            a.value * b.value,
            _add(_mul(a.dx, b.value), _mul(a.value, b.dx)),
            _add(_mul(a.dy, b.value), _mul(a.value, b.dy)),
            _add(_add(_mul(a.dxx, b.value), _mul(2.0, _mul(a.dx, b.dx))), _mul(a.value, b.dxx)),
            _add(_add(_mul(a.dyy, b.value), _mul(2.0, _mul(a.dy, b.dy))), _mul(a.value, b.dyy)),
            _add(
                _add(_mul(a.dxy, b.value), _mul(a.value, b.dxy)),
                _add(_mul(a.dx, b.dy), _mul(a.dy, b.dx)),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet2):
            if np.any(np.asarray(_raw(other)) == 0):
                raise ad.DomainError("jet division by zero")
            return self.scale(1.0 / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet2):
            return lift("exp", p * lift("ln", self))
        return lift("pow", self, p)

    def reciprocal(self):
        return lift("div", Jet2(1.0), self)

    def with_value_only(self):
        return Jet2(self.value)


def _chain(a: Jet2, f, d1, d2) -> Jet2:
    """Compose a scalar function (value f, derivatives d1, d2 at a.value) with jet a."""
    dx = _mul(d1, a.dx)
    dy = _mul(d1, a.dy)
    dxx = _add(_mul(d2, _mul(a.dx, a.dx)), _mul(d1, a.dxx))
    dyy = _add(_mul(d2, _mul(a.dy, a.dy)), _mul(d1, a.dyy))
    dxy = _add(_mul(d2, _mul(a.dx, a.dy)), _mul(d1, a.dxy))
    return Jet2(f, dx, dy, dxx, dyy, dxy)


def _as_jet(a) -> Jet2:
    return a if isinstance(a, Jet2) else Jet2(a)


def lift(op: str, *args) -> Jet2:
    """Second-order propagation of an elementary operation through jets.

    ``op`` is one of add, sub, mul, div, tanh, exp, ln, sqrt, pow, sin, cos,
    softplus. ``pow`` takes a jet and a constant exponent. Domain violations
    raise :class:`DomainError` instead of producing NaN.
    """
    if op == "add":
        return _as_jet(args[0]) + args[1]
    if op == "sub":
        return _as_jet(args[0]) - args[1]
    if op == "mul":
        return _as_jet(args[0]) * args[1]
    if op == "div":
        num, den = _as_jet(args[0]), _as_jet(args[1])
        v = den.value
        if np.any(np.asarray(_raw(v)) == 0):
            raise ad.DomainError("division by a jet with zero value")
        r = 1.0 / v
        r2 = r * r
        inv = _chain(den, r, -r2, 2.0 * r2 * r)
        if isinstance(num.value, float) and num.value == 1.0 and all(_is0(c) for c in num.components[1:]):
            return inv
        return num * inv
    (a, *rest) = args
    a = _as_jet(a)
    v = a.value
    if op == "tanh":
        t = ad.tanh(v)
        d1 = 1.0 - t * t
        return _chain(a, t, d1, -2.0 * t * d1)
    if op == "exp":
        e = ad.exp(v)
        return _chain(a, e, e, e)
    if op == "ln":
        if np.any(np.asarray(_raw(v)) <= 0):
            raise ad.DomainError("ln of a nonpositive jet value")
        r = 1.0 / v
        return _chain(a, ad.log(v), r, -(r * r))
    if op == "sqrt":
        if np.any(np.asarray(_raw(v)) <= 0):
            raise ad.DomainError("sqrt needs a positive jet value")
        s = ad.sqrt(v)
        d1 = 0.5 / s
        return _chain(a, s, d1, -0.5 * d1 / v)
    if op == "pow":
        (p,) = rest
        p = float(p)
        if p == 1.0:
            return a
        raw = np.asarray(_raw(v))
        if not p.is_integer() and np.any(raw <= 0):
            raise ad.DomainError("non-integer power needs a positive jet value")
        if p < 2.0 and np.any(raw == 0):
            raise ad.DomainError("power not twice differentiable at zero")
        if p == 2.0:
            return _chain(a, v * v, 2.0 * v, 2.0)
        return _chain(a, v**p, p * v ** (p - 1.0), p * (p - 1.0) * v ** (p - 2.0))
    if op == "sin":
        s, c = ad.sin(v), ad.cos(v)
        return _chain(a, s, c, -s)
    if op == "cos":
        s, c = ad.sin(v), ad.cos(v)
        return _chain(a, c, -s, -c)
    if op == "softplus":
        s = ad.sigmoid(v)
        return _chain(a, ad.softplus(v), s, s * (1.0 - s))
    raise ValueError(f"unsupported elementary op {op!r}")


def jet_maximum(a: Jet2, floor: float) -> Jet2:
    """``max(a, floor)``: where the floor is active the jet is the constant ``floor``."""
    mask = ad.where_mask(a.value, floor)
    if np.all(mask == 1.0):
        return a
    return Jet2(ad.maximum(a.value, floor), *(_mul(c, mask) for c in a.components[1:]))


def seed_x(x) -> Jet2:
    """Jet of the x-coordinate input: dx = 1, everything else zero."""
    return Jet2(x, 1.0)


def seed_y(y) -> Jet2:
    return Jet2(y, 0.0, 1.0)


def seed_passive(value) -> Jet2:
    """Jet of an input with no spatial dependence (the Reynolds number)."""
    return Jet2(value)

"""Array-level reverse-mode accumulation over a flat parameter vector.

A :class:`ParamTape` records every elementary operation applied to values
derived from its parameter leaf. Each recorded :class:`Var` wraps a float64
ndarray (or 0-d array); the backward sweep walks the record in reverse
creation order, which is always a valid topological order.

The module-level functions (:func:`tanh`, :func:`exp`, ...) dispatch on the
argument type, so the same model code runs on plain ndarrays (fast
evaluation) and on tape variables (training).
"""

from __future__ import annotations

import math
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "DomainError",
    "NonFiniteLossError",
    "ParamTape",
    "TapeError",
    "Var",
    "cos",
    "exp",
    "log",
    "loss_gradient",
    "maximum",
    "sigmoid",
    "sin",
    "softplus",
    "sqrt",
    "tanh",
    "value_of",
    "where_mask",
]


class TapeError(RuntimeError):
    """Misuse of a tape (double replay, cross-tape arithmetic)."""


class DomainError(ValueError):
    """An elementary function was applied outside its domain."""


class NonFiniteLossError(FloatingPointError):
    """A loss (or one of its named terms) evaluated to NaN or Inf."""

    def __init__(self, terms):
        self.terms = list(terms)
        super().__init__("non-finite loss term(s): " + ", ".join(self.terms))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.asarray(g.sum())
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Var:
    """A recorded array value. Arithmetic with ndarrays/floats treats them as constants."""

    __slots__ = ("value", "tape", "parents", "index")
    __array_ufunc__ = None  # ndarray <op> Var defers to the reflected Var op

    def __init__(self, value, tape: "ParamTape", parents=()):
        self.value = value
        self.tape = tape
        self.parents = parents  # tuple of (Var, vjp) pairs
        self.index = tape._record(self)

    @property
    def shape(self) -> tuple:
        return np.shape(self.value)

    def __repr__(self) -> str:
        return f"Var(shape={self.shape})"

    def _wrap(self, other):
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise TapeError("operands belong to different tapes")
            return other
        return None

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        o = self._wrap(other)
        ov = o.value if o is not None else other
        out = self.value + ov
        sa = self.shape
        parents = [(self, lambda g: _unbroadcast(g, sa))]
        if o is not None:
            sb = o.shape
            parents.append((o, lambda g: _unbroadcast(g, sb)))
        return Var(out, self.tape, tuple(parents))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._wrap(other)
        ov = o.value if o is not None else other
        out = self.value - ov
        sa = self.shape
        parents = [(self, lambda g: _unbroadcast(g, sa))]
        if o is not None:
            sb = o.shape
            parents.append((o, lambda g: _unbroadcast(-g, sb)))
        return Var(out, self.tape, tuple(parents))

    def __rsub__(self, other):
        sa = self.shape
        return Var(other - self.value, self.tape, ((self, lambda g: _unbroadcast(-g, sa)),))

    def __neg__(self):
        return Var(-self.value, self.tape, ((self, lambda g: -g),))

    def __mul__(self, other):
        o = self._wrap(other)
        a = self.value
        sa = self.shape
        if o is None:
            b = other
            return Var(a * b, self.tape, ((self, lambda g: _unbroadcast(g * b, sa)),))
        b = o.value
        sb = o.shape
        return Var(
            a * b,
            self.tape,
            (
                (self, lambda g: _unbroadcast(g * b, sa)),
                (o, lambda g: _unbroadcast(g * a, sb)),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._wrap(other)
        if o is None:
            if np.any(np.asarray(other) == 0):
                raise DomainError("division by zero")
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Var):
            raise TypeError("Var ** Var is not supported; use exp(b * log(a))")
        a = self.value
        if p == 2:
            sa = self.shape
            return Var(a * a, self.tape, ((self, lambda g: _unbroadcast(2.0 * g * a, sa)),))
        if not float(p).is_integer() and np.any(a < 0):
            raise DomainError("fractional power of a negative value")
        if p < 0 and np.any(a == 0):
            raise DomainError("negative power of zero")
        out = a**p
        d = p * a ** (p - 1)
        return Var(out, self.tape, ((self, lambda g: g * d),))

    def reciprocal(self):
        a = self.value
        if np.any(a == 0):
            raise DomainError("division by a zero value")
        out = 1.0 / a
        return Var(out, self.tape, ((self, lambda g: -g * out * out),))

    def __matmul__(self, other):
        o = self._wrap(other)
        a = self.value
        if o is None:
            b = np.asarray(other)
            return Var(a @ b, self.tape, ((self, lambda g: _matmul_grad_left(g, b, a.shape)),))
        b = o.value
        return Var(
            a @ b,
            self.tape,
            (
                (self, lambda g: _matmul_grad_left(g, b, a.shape)),
                (o, lambda g: _matmul_grad_right(g, a, b.shape)),
            ),
        )

    def __rmatmul__(self, other):
        a = np.asarray(other)
        b = self.value
        return Var(a @ b, self.tape, ((self, lambda g: _matmul_grad_right(g, a, b.shape)),))

    def __getitem__(self, key):
        a = self.value
        shape, dtype = a.shape, a.dtype

        def vjp(g):
            full = np.zeros(shape, dtype=dtype)
            if _needs_add_at(key):
                np.add.at(full, key, g)
            else:
                full[key] = g
            return full

        return Var(a[key], self.tape, ((self, vjp),))

    def reshape(self, *shape):
        a = self.value
        old = a.shape
        return Var(a.reshape(*shape), self.tape, ((self, lambda g: g.reshape(old)),))

    def sum(self):
        a = self.value
        shape = a.shape
        return Var(np.asarray(a.sum()), self.tape, ((self, lambda g: np.broadcast_to(g, shape)),))

    def mean(self):
        n = max(np.size(self.value), 1)
        return self.sum() * (1.0 / n)

    # -- elementary functions ----------------------------------------------
    def tanh(self):
        t = np.tanh(self.value)
        return Var(t, self.tape, ((self, lambda g: g * (1.0 - t * t)),))

    def exp(self):
        e = np.exp(self.value)
        return Var(e, self.tape, ((self, lambda g: g * e),))

    def log(self):
        a = self.value
        if np.any(a <= 0):
            raise DomainError("log of a nonpositive value")
        return Var(np.log(a), self.tape, ((self, lambda g: g / a),))

    def sqrt(self):
        a = self.value
        if np.any(a < 0):
            raise DomainError("sqrt of a negative value")
        s = np.sqrt(a)
        if np.any(s == 0):
            raise DomainError("sqrt is not differentiable at zero")
        return Var(s, self.tape, ((self, lambda g: 0.5 * g / s),))

    def sin(self):
        a = self.value
        return Var(np.sin(a), self.tape, ((self, lambda g: g * np.cos(a)),))

    def cos(self):
        a = self.value
        return Var(np.cos(a), self.tape, ((self, lambda g: -g * np.sin(a)),))

    def softplus(self):
        a = self.value
        s = _sigmoid(a)
        return Var(np.logaddexp(0.0, a), self.tape, ((self, lambda g: g * s),))

    def sigmoid(self):
        s = _sigmoid(self.value)
        return Var(s, self.tape, ((self, lambda g: g * s * (1.0 - s)),))

    def maximum(self, floor: float):
        a = self.value
        mask = a >= floor
        return Var(np.where(mask, a, floor), self.tape, ((self, lambda g: g * mask),))


def _needs_add_at(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def _matmul_grad_left(g, b, shape_a):
    if b.ndim == 1:
        g = np.multiply.outer(g, b) if g.ndim else g * b
        return _unbroadcast(g, shape_a)
    out = g @ b.T
    return _unbroadcast(out, shape_a)


def _matmul_grad_right(g, a, shape_b):
    if a.ndim == 1:
        return np.multiply.outer(a, g)
    if g.ndim == 1:
        return a.T @ g
    return a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])


def _sigmoid(a):
    # split by sign so exp never overflows
    out = np.empty_like(a, dtype=float) if np.ndim(a) else None
    if out is None:
        return 1.0 / (1.0 + math.exp(-a)) if a >= 0 else math.exp(a) / (1.0 + math.exp(a))
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


class ParamTape:
    """Record of operations on a flat parameter vector, with an aligned gradient buffer.

    One tape serves one backward replay; call :meth:`reset` before reusing it.
    Confine a tape to a single thread.
    """

    def __init__(self, params: np.ndarray):
        self._nodes: list[Var] = []
        self._replayed = False
        self.grad = np.zeros(np.size(params), dtype=np.float64)
        self.params = Var(np.array(params, dtype=np.float64).ravel(), self)

    def _record(self, var: Var) -> int:
        if self._replayed:
            raise TapeError("tape already replayed; call reset() before recording")
        self._nodes.append(var)
        return len(self._nodes) - 1

    def __len__(self) -> int:
        return len(self._nodes)

    def reset(self) -> Var:
        """Drop the record, zero the gradient buffer and return a fresh parameter leaf."""
        values = self.params.value
        self._nodes = []
        self._replayed = False
        self.grad = np.zeros_like(self.grad)
        self.params = Var(values, self)
        return self.params

    def backward(self, out: Var) -> np.ndarray:
        """Accumulate d(out)/d(params) into the gradient buffer and return it."""
        if self._replayed:
            raise TapeError("reverse accumulation already replayed on this tape")
        if not isinstance(out, Var) or out.tape is not self:
            raise TapeError("output was not recorded on this tape")
        if np.size(out.value) != 1:
            raise TapeError("backward needs a scalar output")
        self._replayed = True
        grads: dict[int, np.ndarray] = {out.index: np.ones_like(out.value)}
        nodes = self._nodes
        for i in range(out.index, -1, -1):
            g = grads.pop(i, None)
            if g is None:
                continue
            node = nodes[i]
            if i == self.params.index:
                self.grad += g
                continue
            for parent, vjp in node.parents:
                contrib = vjp(g)
                j = parent.index
                prev = grads.get(j)
                grads[j] = contrib if prev is None else prev + contrib
        self._nodes = []
        return self.grad


def value_of(x):
    """Raw numeric value of a Var, or ``x`` itself."""
    return x.value if isinstance(x, Var) else x


def _dispatch(name: str, fn: Callable, check: Callable | None = None):
    def op(x):
        if isinstance(x, Var):
            return getattr(x, name)()
        if check is not None:
            check(x)
        return fn(x)

    op.__name__ = name
    return op


def _check_log(x):
    if np.any(np.asarray(x) <= 0):
        raise DomainError("log of a nonpositive value")


def _check_sqrt(x):
    if np.any(np.asarray(x) < 0):
        raise DomainError("sqrt of a negative value")


tanh = _dispatch("tanh", np.tanh)
exp = _dispatch("exp", np.exp)
log = _dispatch("log", np.log, _check_log)
sqrt = _dispatch("sqrt", np.sqrt, _check_sqrt)
sin = _dispatch("sin", np.sin)
cos = _dispatch("cos", np.cos)
softplus = _dispatch("softplus", lambda a: np.logaddexp(0.0, a))
sigmoid = _dispatch("sigmoid", _sigmoid)


def maximum(x, floor: float):
    """Elementwise ``max(x, floor)``; gradient flows only where ``x >= floor``."""
    if isinstance(x, Var):
        return x.maximum(floor)
    return np.maximum(x, floor)


def where_mask(x, floor: float):
    """Float mask (1 where ``x >= floor``) used to zero derivatives of a floored jet."""
    return (np.asarray(value_of(x)) >= floor).astype(float)


def loss_gradient(params: np.ndarray, loss_eval: Callable) -> np.ndarray:
    """Gradient of a scalar loss with respect to a flat parameter vector.

    ``loss_eval`` receives the recorded parameter leaf and returns either a
    scalar :class:`Var` or a mapping of named scalar terms that are summed.
    A non-finite result raises :class:`NonFiniteLossError` naming the bad terms.
    """
    tape = ParamTape(params)
    out = loss_eval(tape.params)
    if isinstance(out, Mapping):
        bad = [k for k, v in out.items() if not np.all(np.isfinite(value_of(v)))]
        if bad:
            raise NonFiniteLossError(bad)
        terms = [v for v in out.values() if isinstance(v, Var)]
        if not terms:
            return tape.grad.copy()
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        out = total
    if not isinstance(out, Var):
        if not np.all(np.isfinite(out)):
            raise NonFiniteLossError(["loss"])
        return tape.grad.copy()
    if not np.all(np.isfinite(out.value)):
        raise NonFiniteLossError(["loss"])
    return tape.backward(out).copy()

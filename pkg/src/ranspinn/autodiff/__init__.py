"""Nested differentiation: spatial second-order jets over a reverse-mode tape."""

from .jet import Jet2, jet_maximum, lift, seed_passive, seed_x, seed_y
from .tape import (
    DomainError,
    NonFiniteLossError,
    ParamTape,
    TapeError,
    Var,
    loss_gradient,
    value_of,
)

__all__ = [
    "DomainError",
    "Jet2",
    "NonFiniteLossError",
    "ParamTape",
    "TapeError",
    "Var",
    "jet_maximum",
    "lift",
    "loss_gradient",
    "seed_passive",
    "seed_x",
    "seed_y",
    "value_of",
]

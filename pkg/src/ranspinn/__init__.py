"""PINN surrogates of incompressible turbulent flow with a k-epsilon closure."""

from .net import InputScaling, NetworkEnsemble, ensemble_predict
from .physics import FIELDS, FlowState, ModelConstants, RefScales, SourceTerms, pde_residuals
from .trainer import LossHistory, Phase, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "FIELDS",
    "FlowState",
    "InputScaling",
    "LossHistory",
    "ModelConstants",
    "NetworkEnsemble",
    "Phase",
    "RefScales",
    "SourceTerms",
    "TrainConfig",
    "ensemble_predict",
    "pde_residuals",
    "train",
]

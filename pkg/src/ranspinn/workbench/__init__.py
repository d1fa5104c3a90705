"""Datasets, configuration, checkpoints and the command line."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .mms import MmsSpec, mms_cloud, mms_fields, mms_generate, mms_sources

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "MmsSpec",
    "load_checkpoint",
    "mms_cloud",
    "mms_fields",
    "mms_generate",
    "mms_sources",
    "save_checkpoint",
]

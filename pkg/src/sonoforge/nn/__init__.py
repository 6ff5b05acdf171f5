"""From-scratch convolutional classifier: ops, model, optimizer."""
from . import functional
from .model import (
    CheckpointError,
    GeometryError,
    Model,
    ModelSpec,
    build_model,
    geometry_chain,
    load_checkpoint,
    save_checkpoint,
)
from .optim import AdamState, adam_step

__all__ = [
    "functional",
    "CheckpointError",
    "GeometryError",
    "Model",
    "ModelSpec",
    "build_model",
    "geometry_chain",
    "load_checkpoint",
    "save_checkpoint",
    "AdamState",
    "adam_step",
]

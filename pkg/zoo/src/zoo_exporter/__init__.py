"""Export pretrained model-zoo checkpoints as WeightBundle files."""

from .bundle import read_bundle, write_bundle
from .export import (MODELS, ModelUnavailable, UnsupportedLayer,
                     eligible_layers, export)

__all__ = [
    "MODELS",
    "ModelUnavailable",
    "UnsupportedLayer",
    "eligible_layers",
    "export",
    "read_bundle",
    "write_bundle",
]

__version__ = "0.1.0"

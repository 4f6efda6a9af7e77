"""Style transfer with pluggable distribution-distance style losses."""

from .backbone import (
    Backbone,
    FeatureMatrix,
    extract_features,
    load_backbone,
    raw_pixel_features,
    save_random_weights,
)
from .critic import CriticConfig, CriticState
from .engine import LossTrace, TransferConfig, run_style_representation, run_transfer

__all__ = [
    "Backbone",
    "FeatureMatrix",
    "extract_features",
    "load_backbone",
    "raw_pixel_features",
    "save_random_weights",
    "CriticConfig",
    "CriticState",
    "LossTrace",
    "TransferConfig",
    "run_style_representation",
    "run_transfer",
]

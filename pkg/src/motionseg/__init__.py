"""Research toolkit for a spatio-temporal motion-segmentation network:
data pipeline, ignore-aware focal-loss training, feature-based alignment
pre-processing, and the full evaluation protocol."""

from .labelspace import Label
from .model import ModelConfig, build_layer_table, count_parameters, receptive_field
from .network import MotionSegNet, import_pretrained_encoder
from .losses import LossConfig
from .training import TrainConfig, train, validate, checkpoint, restore

__all__ = [
    "Label", "ModelConfig", "build_layer_table", "count_parameters",
    "receptive_field", "MotionSegNet", "import_pretrained_encoder",
    "LossConfig", "TrainConfig", "train", "validate", "checkpoint", "restore",
]

__version__ = "0.1.0"

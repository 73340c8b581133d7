"""Pluggable mask producers: the trainable toy segmenter and mask import/export."""
from .dice import DEFAULT_SMOOTHING, dice_loss
from .masks import FormatError, MaskStack, import_masks, read_mask_file, write_masks
from .train import Adam, TrainConfig, TrainingError, learning_rate, train
from .unet import ToyUNet, ToyUNetSpec, segment

__all__ = [
    "Adam",
    "DEFAULT_SMOOTHING",
    "FormatError",
    "MaskStack",
    "TrainConfig",
    "TrainingError",
    "ToyUNet",
    "ToyUNetSpec",
    "dice_loss",
    "import_masks",
    "learning_rate",
    "read_mask_file",
    "segment",
    "train",
    "write_masks",
]

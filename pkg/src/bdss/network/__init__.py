from .checkpoint import checkpoint_bytes, load_checkpoint, model_from_bytes, parse_checkpoint, save_checkpoint
from .model import (
    BDSS,
    ConvWeights,
    DenseBlock,
    DenseBlockConfig,
    ModelConfig,
    build_bdss,
    dense_block_forward,
    forward,
    receptive_field,
    stacked_receptive_field,
)

__all__ = [
    "BDSS",
    "ConvWeights",
    "DenseBlock",
    "DenseBlockConfig",
    "ModelConfig",
    "build_bdss",
    "checkpoint_bytes",
    "dense_block_forward",
    "forward",
    "load_checkpoint",
    "model_from_bytes",
    "parse_checkpoint",
    "receptive_field",
    "save_checkpoint",
    "stacked_receptive_field",
]
